#pragma once

// Training-step benchmark: mean wall time and allocator high-water mark of
// one objective evaluation (loss + gradients) plus one Adam update, on a
// synthetic KG.

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "gekc/alloc_meter.hpp"
#include "gekc/train.hpp"

namespace gekc {

struct BenchConfig {
  ModelFamily family = ModelFamily::CP;
  ModelKind kind = ModelKind::EnergyBased;
  Objective objective = Objective::PLL;
  std::size_t entities = 10000;
  std::size_t relations = 16;
  std::size_t dim = 64;
  std::size_t batch = 256;
  std::size_t repeats = 25;
  std::size_t warmup = 2;
  std::uint64_t seed = 0;
  std::size_t ebm_block_elems = (std::size_t(512) << 20) / 8;
  std::size_t mem_cap_bytes = std::size_t(3) << 30;
};

struct BenchRow {
  BenchConfig cfg;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  std::size_t peak_bytes = 0;
  std::size_t peak_rss_bytes = 0;
  bool oom_refused = false;
};

inline std::string bench_csv_header() {
  return "model,kind,entities,relations,dim,batch,objective,mean_seconds,std_seconds,"
         "peak_bytes";
}

inline std::string bench_csv_row(const BenchRow& row) {
  std::ostringstream os;
  os << to_string(row.cfg.family) << ',' << to_string(row.cfg.kind) << ','
     << row.cfg.entities << ',' << row.cfg.relations << ',' << row.cfg.dim << ','
     << row.cfg.batch << ',' << (row.cfg.objective == Objective::PLL ? "pll" : "mle")
     << ',';
  if (row.oom_refused) os << "oom-refused,oom-refused," << row.peak_bytes;
  else os << row.mean_seconds << ',' << row.std_seconds << ',' << row.peak_bytes;
  return os.str();
}

// Rough working-set estimate used for the refusal guard: parameters, grads
// and two Adam moments, plus the (possibly blocked) logits matrix for
// energy-based PLL.
inline std::size_t bench_estimated_bytes(const BenchConfig& cfg) {
  std::size_t params = 0;
  switch (cfg.family) {
    case ModelFamily::CP: params = (2 * cfg.entities + cfg.relations) * cfg.dim; break;
    case ModelFamily::ComplEx:
      params = 2 * (cfg.entities + cfg.relations) * cfg.dim;
      break;
    case ModelFamily::RESCAL:
      params = cfg.entities * cfg.dim + cfg.relations * cfg.dim * cfg.dim;
      break;
    case ModelFamily::TuckER:
      params = cfg.entities * cfg.dim + cfg.relations * cfg.dim +
               cfg.dim * cfg.dim * cfg.dim;
      break;
  }
  std::size_t bytes = params * 8 * 4;  // params + grads + adam m1/m2
  if (cfg.kind == ModelKind::EnergyBased) {
    std::size_t logits = std::min(cfg.ebm_block_elems, cfg.batch * cfg.entities);
    bytes += logits * 8;
    if (cfg.family == ModelFamily::ComplEx) bytes += params * 8 * 4;  // lifted tables
  }
  return bytes;
}

inline BenchRow bench_step(const BenchConfig& cfg) {
  BenchRow row;
  row.cfg = cfg;
  if (bench_estimated_bytes(cfg) > cfg.mem_cap_bytes) {
    row.oom_refused = true;
    return row;
  }
  ModelDims dims{cfg.entities, cfg.relations, cfg.dim, cfg.dim, cfg.dim};
  Model model = init_params(cfg.family, cfg.kind, dims, default_init(cfg.kind), cfg.seed);
  CounterRng rng(cfg.seed ^ 0xbe7c);
  std::vector<Triple> batch(cfg.batch);
  for (auto& t : batch)
    t = {std::int32_t(rng.next_below(cfg.entities)),
         std::int32_t(rng.next_below(cfg.relations)),
         std::int32_t(rng.next_below(cfg.entities))};
  ObjectiveOptions opts;
  opts.ebm_block_elems = cfg.ebm_block_elems;
  AdamConfig adam{resolved_learning_rate(TrainConfig{}, cfg.kind)};
  AdamState adam_state;
  std::vector<double> times;
  std::int64_t peak = 0;
  for (std::size_t rep = 0; rep < cfg.warmup + cfg.repeats; ++rep) {
    memtrack::reset_peak();
    auto t0 = std::chrono::steady_clock::now();
    ObjectiveResult obj = cfg.objective == Objective::PLL
                              ? pll_loss(model, batch, {}, opts)
                              : mle_loss(model, batch, opts);
    adam_step(param_views(model), grad_views(obj.grads, model), adam_state, adam);
    model.touch();
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
    if (rep >= cfg.warmup) {
      times.push_back(dt.count());
      peak = std::max(peak, memtrack::peak_bytes());
    }
  }
  for (double t : times) row.mean_seconds += t / double(times.size());
  for (double t : times)
    row.std_seconds += (t - row.mean_seconds) * (t - row.mean_seconds);
  row.std_seconds = times.size() > 1
                        ? std::sqrt(row.std_seconds / double(times.size() - 1))
                        : 0.0;
  row.peak_bytes = std::size_t(std::max<std::int64_t>(0, peak));
  row.peak_rss_bytes = std::size_t(std::max<std::int64_t>(0, memtrack::peak_rss_bytes()));
  return row;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]) / double(n);
    my += std::log(y[i]) / double(n);
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    den += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return num / den;
}

}  // namespace gekc
