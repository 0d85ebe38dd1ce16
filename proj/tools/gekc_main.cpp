// gekc: train, evaluate, sample and benchmark generative KGE circuits.

#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gekc/gekc.hpp"

GEKC_DEFINE_COUNTING_ALLOCATOR

namespace {

using namespace gekc;

struct ManifestWriter {
  std::string command;
  std::vector<std::pair<std::string, std::string>> entries;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void add(const std::string& key, const std::string& value) {
    entries.emplace_back(key, value);
  }
  void add(const std::string& key, double value) { add(key, std::to_string(value)); }
  void add(const std::string& key, std::uint64_t value) {
    add(key, std::to_string(value));
  }
  void add_input(const std::string& key, const std::string& path) {
    if (path.empty()) return;
    add("input." + key, path);
    add("hash." + key, hex64(hash_file(path)));
  }
  void write(const std::string& path) {
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << "command = " << command << "\n";
    out << "version = " << kVersion << "\n";
    for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
    out << "wall_seconds = " << secs << "\n";
    out << "peak_alloc_bytes = " << memtrack::peak_bytes() << "\n";
    out << "peak_rss_bytes = " << memtrack::peak_rss_bytes() << "\n";
  }
};

ModelFamily parse_family(const std::string& s) {
  auto f = family_from_string(s);
  if (!f) throw ArgumentError("unknown family: " + s);
  return *f;
}

ModelKind parse_kind(const std::string& s) {
  auto k = kind_from_string(s);
  if (!k) throw ArgumentError("unknown kind: " + s);
  return *k;
}

struct DataArgs {
  std::string train, valid, test;
  bool reciprocal = false;

  KnowledgeGraph load() const {
    if (train.empty()) throw ArgumentError("--train is required");
    return load_kg(train, valid, test, {.reciprocal = reciprocal});
  }
  void attach(CLI::App* app) {
    app->add_option("--train", train, "training triples (TSV)")->required();
    app->add_option("--valid", valid, "validation triples (TSV)");
    app->add_option("--test", test, "test triples (TSV)");
    app->add_flag("--reciprocal", reciprocal,
                  "augment every predicate with its inverse at load time");
  }
  void add_hashes(ManifestWriter& mw) const {
    mw.add_input("train", train);
    mw.add_input("valid", valid);
    mw.add_input("test", test);
  }
};

struct ConstraintArgs {
  std::string path;
  bool allow_unconstrained = false;

  void attach(CLI::App* app) {
    app->add_option("--constraints", path,
                    "domain metadata (entity<TAB>domain and "
                    "predicate<TAB>subj_domain<TAB>obj_domain lines)");
    app->add_flag("--allow-unconstrained", allow_unconstrained,
                  "predicates without metadata stay unconstrained");
  }
  bool enabled() const { return !path.empty(); }
  ConstraintCircuit compile(const KnowledgeGraph& kg) const {
    DomainMetadata meta = load_domains(path, kg);
    for (const auto& w : meta.warnings) std::cerr << "warning: " << w << "\n";
    return compile_constraints(meta, kg, allow_unconstrained);
  }
};

void check_vocab(const KnowledgeGraph& kg, std::uint64_t ckpt_vocab_hash) {
  if (ckpt_vocab_hash != 0 && ckpt_vocab_hash != vocab_hash(kg.vocab))
    throw DataError("checkpoint/dataset vocabulary hash mismatch");
}

// ---------------------------------------------------------------------------

void add_train(CLI::App& app) {
  struct Args {
    DataArgs data;
    ConstraintArgs cons;
    std::string family_s = "cp", kind_s = "squared", objective_s = "pll";
    std::string init_s, distill_from, out_prefix = "run";
    std::size_t dim = 32, dim_entities = 0, dim_relations = 0;
    TrainConfig cfg;
    double sigma = 1e-3, alpha = 1e3;
  };
  auto args = std::make_shared<Args>();

  auto* cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  cmd->set_config("--config", "", "flat key = value config file");
  args->data.attach(cmd);
  args->cons.attach(cmd);
  cmd->add_option("--family", args->family_s, "cp | complex | rescal | tucker");
  cmd->add_option("--kind", args->kind_s, "ebm | nonneg | squared");
  cmd->add_option("--objective", args->objective_s, "pll | mle");
  cmd->add_option("--dim", args->dim, "embedding size");
  cmd->add_option("--dim-entities", args->dim_entities, "tucker entity embedding size");
  cmd->add_option("--dim-relations", args->dim_relations,
                  "tucker predicate embedding size");
  cmd->add_option("--batch", args->cfg.batch_size, "batch size");
  cmd->add_option("--lr", args->cfg.learning_rate,
                  "learning rate (0 = per-kind default)");
  cmd->add_option("--seed", args->cfg.seed, "rng seed");
  cmd->add_option("--epochs", args->cfg.max_epochs, "maximum epochs");
  cmd->add_option("--patience", args->cfg.patience, "early-stopping patience");
  cmd->add_option("--ws", args->cfg.weights.ws, "subject PLL weight");
  cmd->add_option("--wo", args->cfg.weights.wo, "object PLL weight");
  cmd->add_option("--wr", args->cfg.weights.wr, "predicate PLL weight");
  cmd->add_option("--valid-sample", args->cfg.valid_sample,
                  "validation queries per epoch (0 = all)");
  cmd->add_option("--init", args->init_s, "gaussian | dirichlet | lognormal");
  cmd->add_option("--sigma", args->sigma, "init scale");
  cmd->add_option("--alpha", args->alpha, "Dirichlet concentration");
  cmd->add_option("--distill-from", args->distill_from,
                  "energy-based checkpoint to square");
  cmd->add_option("--out", args->out_prefix, "output prefix");

  cmd->callback([args]() {
    ManifestWriter mw;
    mw.command = "train";
    ModelFamily family = parse_family(args->family_s);
    ModelKind kind = parse_kind(args->kind_s);
    TrainConfig& cfg = args->cfg;
    if (args->objective_s == "mle") cfg.objective = Objective::MLE;
    else if (args->objective_s == "pll") cfg.objective = Objective::PLL;
    else throw ArgumentError("unknown objective: " + args->objective_s);
    if (cfg.objective == Objective::MLE && kind == ModelKind::EnergyBased)
      throw ArgumentError(
          "--objective mle --kind ebm: exact MLE of an energy-based model needs the "
          "partition function over exp(phi), which is infeasible at KG scale; use a "
          "nonneg or squared kind");
    if (!args->distill_from.empty() && kind != ModelKind::Squared)
      throw ArgumentError("--distill-from targets the squared kind only");

    KnowledgeGraph kg = args->data.load();
    args->data.add_hashes(mw);
    std::optional<ConstraintCircuit> circuit;
    if (args->cons.enabled()) {
      circuit = args->cons.compile(kg);
      mw.add_input("constraints", args->cons.path);
      mw.add("constraints.groups", std::uint64_t(circuit->groups.size()));
      mw.add("constraints.compiled_size", std::uint64_t(circuit->compiled_size()));
    }

    ModelDims dims{kg.num_entities(), kg.num_predicates(), args->dim,
                   args->dim_entities ? args->dim_entities : args->dim,
                   args->dim_relations ? args->dim_relations : args->dim};
    Model model;
    if (!args->distill_from.empty()) {
      std::uint64_t vh = 0;
      Model ebm = load_checkpoint(args->distill_from, &vh);
      check_vocab(kg, vh);
      if (ebm.family != family)
        throw DataError("distillation checkpoint family does not match --family");
      DistillReport rep;
      model = distill(ebm,
                      kg.valid.empty() ? std::span<const Triple>(kg.train)
                                       : std::span<const Triple>(kg.valid),
                      &rep);
      mw.add("distill.nonneg_fraction", rep.nonneg_fraction);
      mw.add("distill.queries", std::uint64_t(rep.queries));
      mw.add("distill.skipped", std::uint64_t(rep.skipped));
      mw.add("distill.min_kendall_tau", rep.min_kendall_tau);
    } else {
      InitScheme scheme = default_init(kind);
      if (!args->init_s.empty()) {
        if (args->init_s == "gaussian") scheme.kind = InitKind::Gaussian;
        else if (args->init_s == "dirichlet") scheme.kind = InitKind::Dirichlet;
        else if (args->init_s == "lognormal") scheme.kind = InitKind::LogNormal;
        else throw ArgumentError("unknown init scheme: " + args->init_s);
      }
      scheme.sigma = args->sigma;
      scheme.alpha = args->alpha;
      model = init_params(family, kind, dims, scheme, cfg.seed);
    }
    model.reciprocal = kg.reciprocal;

    TrainResult result = fit(std::move(model), kg, cfg, circuit ? &*circuit : nullptr);

    std::string ckpt = args->out_prefix + ".ckpt";
    save_checkpoint(ckpt, result.model, vocab_hash(kg.vocab));
    {
      std::ofstream log(args->out_prefix + ".log");
      for (const auto& e : result.log)
        log << e.epoch << '\t' << e.objective_value << '\t' << e.valid_mrr << '\t'
            << e.seconds << '\t' << e.peak_bytes << '\n';
    }
    mw.add("family", to_string(result.model.family));
    mw.add("kind", to_string(result.model.kind));
    mw.add("objective", args->objective_s);
    mw.add("dim", std::uint64_t(args->dim));
    mw.add("batch", std::uint64_t(cfg.batch_size));
    mw.add("lr", resolved_learning_rate(cfg, result.model.kind));
    mw.add("seed", std::uint64_t(cfg.seed));
    mw.add("reciprocal", std::uint64_t(kg.reciprocal ? 1 : 0));
    mw.add("epochs_run", std::uint64_t(result.log.size()));
    mw.add("best_epoch", std::uint64_t(result.best_epoch));
    mw.add("best_valid_mrr", result.best_valid_mrr);
    if (!kg.valid.empty()) {
      // the reported number always comes from the full validation set
      std::optional<ConstrainedModel> cm;
      SlotScorer scorer = make_scorer(result.model);
      if (circuit) {
        cm.emplace(result.model, *circuit);
        scorer = make_scorer(*cm);
      }
      mw.add("final_full_valid_mrr", mrr_hits(scorer, kg.valid, kg.filter, {1}).mrr);
    }
    mw.add("checkpoint", ckpt);
    mw.add("checkpoint_hash", hex64(hash_file(ckpt)));
    mw.write(args->out_prefix + ".manifest");
    std::cout << "wrote " << ckpt << "\n";
  });
}

void add_eval(CLI::App& app) {
  struct Args {
    DataArgs data;
    ConstraintArgs cons;
    std::string ckpt_path, out_prefix = "eval", split = "test", ranks_path;
    std::vector<std::size_t> hits_ks{1, 3, 10};
    std::vector<std::size_t> sem_ks{1, 5, 10};
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("eval", "filtered ranking metrics for a checkpoint");
  args->data.attach(cmd);
  args->cons.attach(cmd);
  cmd->add_option("--checkpoint", args->ckpt_path, "model checkpoint")->required();
  cmd->add_option("--split", args->split, "test | valid");
  cmd->add_option("--hits-ks", args->hits_ks, "hits@k cutoffs");
  cmd->add_option("--sem-ks", args->sem_ks, "sem@k cutoffs");
  cmd->add_option("--dump-ranks", args->ranks_path, "write per-query fractional ranks");
  cmd->add_option("--out", args->out_prefix, "output prefix");

  cmd->callback([args]() {
    ManifestWriter mw;
    mw.command = "eval";
    KnowledgeGraph kg = args->data.load();
    args->data.add_hashes(mw);
    std::uint64_t vh = 0;
    Model model = load_checkpoint(args->ckpt_path, &vh);
    check_vocab(kg, vh);
    mw.add_input("checkpoint", args->ckpt_path);
    const std::vector<Triple>& triples = args->split == "valid" ? kg.valid : kg.test;
    if (triples.empty()) throw ArgumentError("empty evaluation split: " + args->split);

    std::optional<ConstraintCircuit> circuit;
    std::optional<ConstrainedModel> cm;
    SlotScorer scorer = make_scorer(model);
    if (args->cons.enabled()) {
      circuit = args->cons.compile(kg);
      cm.emplace(model, *circuit);
      scorer = make_scorer(*cm);
    }
    RankingReport rep = mrr_hits(scorer, triples, kg.filter, args->hits_ks);
    if (circuit) rep.sem = sem_at_k(scorer, triples, *circuit, kg.filter, args->sem_ks);

    std::ofstream out(args->out_prefix + ".eval.tsv");
    out << "queries\t" << rep.query_count << "\n";
    out << "mrr\t" << rep.mrr << "\n";
    for (const auto& [k, v] : rep.hits) out << "hits@" << k << '\t' << v << "\n";
    for (const auto& [k, v] : rep.sem) out << "sem@" << k << '\t' << v << "\n";
    if (model.is_gekc()) {
      double ll = 0.0;
      for (const Triple& t : triples)
        ll += (cm ? cm->log_prob(t) : log_prob(model, t)) / double(triples.size());
      out << "mean_log_likelihood\t" << ll << "\n";
    }
    if (!args->ranks_path.empty()) {
      std::ofstream ranks(args->ranks_path);
      for (const Triple& t : triples) {
        auto okeys = scorer.keys(Slot::Object, Pattern{.s = t.subject, .r = t.predicate});
        double ro = rank_query(okeys, t.object, [&](std::int32_t c) {
          return c != t.object && kg.filter.known_object(t.subject, t.predicate, c);
        });
        auto skeys = scorer.keys(Slot::Subject, Pattern{.r = t.predicate, .o = t.object});
        double rs = rank_query(skeys, t.subject, [&](std::int32_t c) {
          return c != t.subject && kg.filter.known_subject(c, t.predicate, t.object);
        });
        ranks << ro << '\t' << rs << '\n';
      }
    }
    mw.add("split", args->split);
    mw.add("mrr", rep.mrr);
    mw.write(args->out_prefix + ".manifest");
    std::cout << "mrr\t" << rep.mrr << "\n";
    for (const auto& [k, v] : rep.sem) std::cout << "sem@" << k << '\t' << v << "\n";
  });
}

void add_sample(CLI::App& app) {
  struct Args {
    DataArgs data;
    ConstraintArgs cons;
    std::string ckpt_path, out_path = "samples.tsv", method = "auto";
    std::size_t n = 1000;
    std::uint64_t seed = 0;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("sample", "draw triples from a GeKC checkpoint");
  args->data.attach(cmd);
  args->cons.attach(cmd);
  cmd->add_option("--checkpoint", args->ckpt_path)->required();
  cmd->add_option("-n,--num", args->n, "number of samples");
  cmd->add_option("--seed", args->seed, "rng seed");
  cmd->add_option("--method", args->method, "auto | ancestral | autoregressive");
  cmd->add_option("--out", args->out_path, "output TSV");

  cmd->callback([args]() {
    ManifestWriter mw;
    mw.command = "sample";
    KnowledgeGraph kg = args->data.load();
    args->data.add_hashes(mw);
    std::uint64_t vh = 0;
    Model model = load_checkpoint(args->ckpt_path, &vh);
    check_vocab(kg, vh);
    mw.add_input("checkpoint", args->ckpt_path);

    std::optional<ConstraintCircuit> circuit;
    std::optional<ConstrainedModel> cm;
    if (args->cons.enabled()) {
      circuit = args->cons.compile(kg);
      cm.emplace(model, *circuit);
    }
    SampleBatch batch;
    const std::string& method = args->method;
    if (method == "ancestral") {
      if (cm) throw ArgumentError("constrained sampling uses --method autoregressive");
      batch = ancestral_sample(model, args->n, args->seed);
    } else if (method == "autoregressive" ||
               (method == "auto" && (cm || model.kind == ModelKind::Squared ||
                                     model.family == ModelFamily::ComplEx))) {
      batch = cm ? autoregressive_sample(*cm, args->n, args->seed)
                 : autoregressive_sample(model, args->n, args->seed);
    } else if (method == "auto") {
      batch = ancestral_sample(model, args->n, args->seed);
    } else {
      throw ArgumentError("unknown sampling method: " + method);
    }
    std::ostringstream header;
    header << "model " << hex64(hash_file(args->ckpt_path)) << " method " << batch.method
           << " seed " << args->seed << " n " << args->n;
    save_triples(args->out_path, batch.triples, kg.vocab, header.str());
    mw.add("method", batch.method);
    mw.add("seed", std::uint64_t(args->seed));
    mw.add("n", std::uint64_t(args->n));
    mw.add("out", args->out_path);
    mw.add("out_hash", hex64(hash_file(args->out_path)));
    mw.write(args->out_path + ".manifest");
    std::cout << "wrote " << args->out_path << "\n";
  });
}

void add_ktd(CLI::App& app) {
  struct Args {
    DataArgs data;
    std::string ref_path, set_a, set_b, out_prefix = "ktd";
    std::size_t batch = 1000, repeats = 100;
    std::uint64_t seed = 0;
  };
  auto args = std::make_shared<Args>();
  auto* cmd =
      app.add_subcommand("ktd", "kernel triple distance between two triple sets");
  args->data.attach(cmd);
  cmd->add_option("--reference", args->ref_path, "ComplEx checkpoint used as embedder")
      ->required();
  cmd->add_option("--set-a", args->set_a)->required();
  cmd->add_option("--set-b", args->set_b)->required();
  cmd->add_option("--batch", args->batch, "triples per repeat");
  cmd->add_option("--repeats", args->repeats);
  cmd->add_option("--seed", args->seed);
  cmd->add_option("--out", args->out_prefix);

  cmd->callback([args]() {
    ManifestWriter mw;
    mw.command = "ktd";
    KnowledgeGraph kg = args->data.load();
    args->data.add_hashes(mw);
    std::uint64_t vh = 0;
    Model ref = load_checkpoint(args->ref_path, &vh);
    check_vocab(kg, vh);
    mw.add_input("reference", args->ref_path);
    mw.add_input("set_a", args->set_a);
    mw.add_input("set_b", args->set_b);
    auto load_set = [&](const std::string& path) {
      Vocabulary vocab = kg.vocab;
      return load_triples(path, vocab, {.frozen_vocab = true});
    };
    std::vector<Triple> a = load_set(args->set_a), b = load_set(args->set_b);
    KtdReport rep = ktd(ref, a, b, args->batch, args->repeats, args->seed);
    std::ofstream out(args->out_prefix + ".ktd.tsv");
    out << "mean\t" << rep.mean << "\nstd\t" << rep.stddev << "\nbatch\t"
        << rep.batch_size << "\nrepeats\t" << rep.repeats << "\n";
    mw.add("mean", rep.mean);
    mw.add("std", rep.stddev);
    mw.write(args->out_prefix + ".manifest");
    std::cout << "ktd\t" << rep.mean << "\t" << rep.stddev << "\n";
  });
}

void add_calibrate(CLI::App& app) {
  struct Args {
    DataArgs data;
    std::string ckpt_path, norm = "logistic", out_prefix = "calibration";
    std::size_t bins = 10;
    std::uint64_t seed = 0;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("calibrate", "expected calibration error report");
  args->data.attach(cmd);
  cmd->add_option("--checkpoint", args->ckpt_path)->required();
  cmd->add_option("--norm", args->norm, "logistic | minmax");
  cmd->add_option("--bins", args->bins);
  cmd->add_option("--seed", args->seed);
  cmd->add_option("--out", args->out_prefix);

  cmd->callback([args]() {
    ManifestWriter mw;
    mw.command = "calibrate";
    KnowledgeGraph kg = args->data.load();
    args->data.add_hashes(mw);
    std::uint64_t vh = 0;
    Model model = load_checkpoint(args->ckpt_path, &vh);
    check_vocab(kg, vh);
    mw.add_input("checkpoint", args->ckpt_path);
    if (kg.test.empty()) throw ArgumentError("calibration needs a test split");
    CalibrationNorm cn;
    if (args->norm == "logistic") cn = CalibrationNorm::Logistic;
    else if (args->norm == "minmax") cn = CalibrationNorm::MinMax;
    else throw ArgumentError("unknown normalisation: " + args->norm);
    CalibrationReport rep = calibration(model, kg.test, kg, cn, args->bins, args->seed);
    std::ofstream out(args->out_prefix + ".calibration.tsv");
    out << "ece\t" << rep.ece << "\nnormalization\t" << rep.normalization << "\nskipped\t"
        << rep.skipped << "\n";
    out << "bin\tmean_prob\tfrequency\tcount\n";
    for (std::size_t j = 0; j < rep.bins.size(); ++j)
      out << j << '\t' << rep.bins[j].mean_prob << '\t' << rep.bins[j].frequency << '\t'
          << rep.bins[j].count << '\n';
    mw.add("ece", rep.ece);
    mw.write(args->out_prefix + ".manifest");
    std::cout << "ece\t" << rep.ece << "\n";
  });
}

void add_bench(CLI::App& app) {
  struct Args {
    std::string family_s = "cp", kind_s = "ebm", objective_s = "pll";
    std::string out_path = "bench.csv";
    std::vector<std::size_t> entities{10000};
    std::vector<std::size_t> batches{128, 256, 512};
    std::size_t relations = 16, dim = 64, repeats = 25, warmup = 2;
    std::uint64_t seed = 0;
    double mem_cap_gib = 3.0;
  };
  auto args = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("bench", "step-time / peak-memory benchmark");
  cmd->add_option("--family", args->family_s);
  cmd->add_option("--kind", args->kind_s);
  cmd->add_option("--objective", args->objective_s);
  cmd->add_option("--entities", args->entities, "entity counts");
  cmd->add_option("--batches", args->batches, "batch sizes");
  cmd->add_option("--relations", args->relations);
  cmd->add_option("--dim", args->dim);
  cmd->add_option("--repeats", args->repeats, "measured repeats per configuration");
  cmd->add_option("--warmup", args->warmup);
  cmd->add_option("--seed", args->seed);
  cmd->add_option("--mem-cap-gib", args->mem_cap_gib,
                  "refuse configurations whose working set exceeds this");
  cmd->add_option("--out", args->out_path);

  cmd->callback([args]() {
    ManifestWriter mw;
    mw.command = "bench";
    std::ofstream out(args->out_path);
    if (!out) throw DataError("cannot write " + args->out_path);
    out << bench_csv_header() << "\n";
    for (std::size_t ne : args->entities)
      for (std::size_t b : args->batches) {
        BenchConfig cfg;
        cfg.family = parse_family(args->family_s);
        cfg.kind = parse_kind(args->kind_s);
        cfg.objective = args->objective_s == "mle" ? Objective::MLE : Objective::PLL;
        cfg.entities = ne;
        cfg.relations = args->relations;
        cfg.dim = args->dim;
        cfg.batch = b;
        cfg.repeats = args->repeats;
        cfg.warmup = args->warmup;
        cfg.seed = args->seed;
        cfg.mem_cap_bytes = std::size_t(args->mem_cap_gib * double(std::size_t(1) << 30));
        BenchRow row = bench_step(cfg);
        out << bench_csv_row(row) << "\n";
        out.flush();
        std::cout << bench_csv_row(row) << "\n";
      }
    mw.add("out", args->out_path);
    mw.write(args->out_path + ".manifest");
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generative knowledge-graph-embedding circuits"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  bool deterministic = true;
  app.add_option("--threads", threads, "worker cap (evaluation only)");
  app.add_flag("--deterministic,!--no-deterministic", deterministic,
               "force ordered reductions");

  add_train(app);
  add_eval(app);
  add_sample(app);
  add_ktd(app);
  add_calibrate(app);
  add_bench(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const gekc::ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const gekc::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const gekc::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
