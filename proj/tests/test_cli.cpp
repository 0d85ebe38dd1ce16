#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gekc/checkpoint.hpp"
#include "gekc/kg.hpp"

using namespace gekc;
namespace fs = std::filesystem;

namespace {

struct CliFixture {
  fs::path dir;
  CliFixture() {
    dir = fs::temp_directory_path() /
          ("gekc_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(dir);
    write_dataset();
  }
  ~CliFixture() { fs::remove_all(dir); }

  std::string file(const std::string& name) const { return (dir / name).string(); }

  void write_dataset() {
    // two entity groups: d* subjects relate to p* objects under "binds";
    // within-group "near" edges give a second predicate
    std::ofstream train(file("train.tsv")), valid(file("valid.tsv")),
        test(file("test.tsv")), dom(file("domains.tsv"));
    const int nd = 6, np = 6;
    auto dname = [](int i) { return "d" + std::to_string(i); };
    auto pname = [](int i) { return "p" + std::to_string(i); };
    int row = 0;
    for (int i = 0; i < nd; ++i)
      for (int j = 0; j < np; ++j) {
        if ((i + j) % 2 == 0) continue;
        std::string line = dname(i) + "\tbinds\t" + pname(j) + "\n";
        if (row % 9 == 7) valid << line;
        else if (row % 9 == 8) test << line;
        else train << line;
        ++row;
      }
    for (int i = 0; i < nd; ++i)
      train << dname(i) << "\tnear\t" << dname((i + 1) % nd) << "\n";
    for (int i = 0; i < nd; ++i) dom << dname(i) << "\tdrug\n";
    for (int j = 0; j < np; ++j) dom << pname(j) << "\tprotein\n";
    dom << "binds\tdrug\tprotein\n";
    dom << "near\tdrug\tdrug\n";
  }

  int run(const std::string& args, std::string* output = nullptr) const {
    std::string cmd = std::string(GEKC_CLI_PATH) + " " + args;
    cmd = "cd " + dir.string() + " && " + cmd + " >cli_stdout.txt 2>cli_stderr.txt";
    int rc = std::system(cmd.c_str());
    if (output) {
      output->clear();
      for (const char* name : {"cli_stdout.txt", "cli_stderr.txt"}) {
        std::ifstream in(file(name));
        output->append(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
      }
    }
    return WEXITSTATUS(rc);
  }
};

}  // namespace

TEST_CASE("cli trains, evaluates, samples and reports consistently") {
  CliFixture fx;
  int rc = fx.run(
      "train --train train.tsv --valid valid.tsv --test test.tsv "
      "--family cp --kind squared --objective mle --dim 8 --batch 32 "
      "--epochs 6 --seed 5 --out m1");
  REQUIRE(rc == 0);
  REQUIRE(fs::exists(fx.file("m1.ckpt")));
  REQUIRE(fs::exists(fx.file("m1.ckpt.manifest")));
  REQUIRE(fs::exists(fx.file("m1.log")));
  REQUIRE(fs::exists(fx.file("m1.manifest")));
  {
    std::ifstream log(fx.file("m1.log"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
      ++lines;
      std::istringstream ss(line);
      double epoch, obj, mrr, secs, bytes;
      ss >> epoch >> obj >> mrr >> secs >> bytes;
      REQUIRE(ss);
    }
    REQUIRE(lines >= 1);
  }

  // deterministic: same seed reproduces the checkpoint bit for bit
  REQUIRE(fx.run("train --train train.tsv --valid valid.tsv --test test.tsv "
                 "--family cp --kind squared --objective mle --dim 8 --batch 32 "
                 "--epochs 6 --seed 5 --out m2") == 0);
  REQUIRE(hash_file(fx.file("m1.ckpt")) == hash_file(fx.file("m2.ckpt")));

  std::string out;
  REQUIRE(fx.run("eval --train train.tsv --valid valid.tsv --test test.tsv "
                 "--checkpoint m1.ckpt --out e1",
                 &out) == 0);
  REQUIRE(out.find("mrr") != std::string::npos);
  REQUIRE(fs::exists(fx.file("e1.eval.tsv")));

  // constrained eval reports sem@k = 1 at every k
  REQUIRE(fx.run("eval --train train.tsv --valid valid.tsv --test test.tsv "
                 "--checkpoint m1.ckpt --constraints domains.tsv --out e2",
                 &out) == 0);
  std::ifstream etsv(fx.file("e2.eval.tsv"));
  std::string line;
  bool saw_sem = false;
  while (std::getline(etsv, line)) {
    if (line.rfind("sem@", 0) == 0) {
      saw_sem = true;
      REQUIRE(line.substr(line.find('\t') + 1) == "1");
    }
  }
  REQUIRE(saw_sem);

  // sampling is seed-deterministic: identical files, header included
  REQUIRE(fx.run("sample --train train.tsv --checkpoint m1.ckpt -n 200 --seed 9 "
                 "--out s1.tsv") == 0);
  REQUIRE(fx.run("sample --train train.tsv --checkpoint m1.ckpt -n 200 --seed 9 "
                 "--out s2.tsv") == 0);
  std::ifstream s1(fx.file("s1.tsv"));
  std::string header;
  std::getline(s1, header);  // records model hash / method / seed / n
  REQUIRE(header.rfind("# model ", 0) == 0);
  REQUIRE(header.find("seed 9") != std::string::npos);
  REQUIRE(hash_file(fx.file("s1.tsv")) == hash_file(fx.file("s2.tsv")));
}

TEST_CASE("cli rejects invalid combinations before doing any work") {
  CliFixture fx;
  std::string out;
  REQUIRE(fx.run("train --train train.tsv --family cp --kind ebm --objective mle",
                 &out) == 2);
  REQUIRE(out.find("infeasible") != std::string::npos);
  REQUIRE(fx.run("train --train train.tsv --family cp --kind nonneg "
                 "--distill-from x.ckpt") == 2);
  REQUIRE(fx.run("train --train train.tsv --family cp --kind squared "
                 "--no-such-flag 1") == 2);
  REQUIRE(fx.run("nonsense-subcommand") == 2);
}

TEST_CASE("cli refuses a checkpoint whose vocabulary does not match") {
  CliFixture fx;
  REQUIRE(fx.run("train --train train.tsv --valid valid.tsv --family cp "
                 "--kind squared --dim 4 --epochs 2 --seed 1 --out m") == 0);
  // a different dataset with other entity names
  {
    std::ofstream other(fx.file("other.tsv"));
    other << "x\tr\ty\nz\tr\tx\n";
  }
  REQUIRE(fx.run("eval --train other.tsv --test other.tsv --checkpoint m.ckpt") == 3);
}

TEST_CASE("cli config file values are overridden by flags") {
  CliFixture fx;
  {
    std::ofstream cfg(fx.file("train.cfg"));
    cfg << "family = cp\nkind = squared\ndim = 4\nepochs = 2\nseed = 11\n";
  }
  REQUIRE(fx.run("train --train train.tsv --config train.cfg --out c1") == 0);
  REQUIRE(fx.run("train --train train.tsv --config train.cfg --seed 12 --out c2") == 0);
  // different seed -> different parameters
  REQUIRE(hash_file(fx.file("c1.ckpt")) != hash_file(fx.file("c2.ckpt")));
  std::ifstream man(fx.file("c2.manifest"));
  std::string text((std::istreambuf_iterator<char>(man)),
                   std::istreambuf_iterator<char>());
  REQUIRE(text.find("seed = 12") != std::string::npos);
}

TEST_CASE("cli bench writes the documented csv header") {
  CliFixture fx;
  REQUIRE(fx.run("bench --family cp --kind squared --entities 200 --batches 16 "
                 "--dim 8 --relations 4 --repeats 2 --warmup 1 --out b.csv") == 0);
  std::ifstream csv(fx.file("b.csv"));
  std::string header;
  std::getline(csv, header);
  REQUIRE(header ==
          "model,kind,entities,relations,dim,batch,objective,mean_seconds,"
          "std_seconds,peak_bytes");
  std::string row;
  REQUIRE(std::getline(csv, row));
  REQUIRE(row.rfind("cp,squared,200,4,8,16,pll,", 0) == 0);
}

TEST_CASE("cli distills an energy-based checkpoint into a squared model") {
  CliFixture fx;
  REQUIRE(fx.run("train --train train.tsv --valid valid.tsv --family complex "
                 "--kind ebm --objective pll --dim 4 --epochs 3 --seed 2 "
                 "--out ebm") == 0);
  std::string out;
  REQUIRE(fx.run("train --train train.tsv --valid valid.tsv --family complex "
                 "--kind squared --objective pll --dim 4 --epochs 2 --seed 2 "
                 "--distill-from ebm.ckpt --out dist",
                 &out) == 0);
  std::ifstream man(fx.file("dist.manifest"));
  std::string text((std::istreambuf_iterator<char>(man)),
                   std::istreambuf_iterator<char>());
  REQUIRE(text.find("distill.nonneg_fraction") != std::string::npos);
  REQUIRE(text.find("distill.min_kendall_tau") != std::string::npos);
}
