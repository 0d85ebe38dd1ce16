#pragma once

// PLL for energy-based models: softmax cross-entropy per slot with the
// |B| x |E| logits matrix materialised in entity blocks under a memory cap.
// Blocking never changes values: the per-row max and the exp sums are taken
// over all entities in id order regardless of the block size.

#include "gekc/detail/grad_complex.hpp"
#include "gekc/detail/grad_cp.hpp"
#include "gekc/detail/grad_rescal.hpp"
#include "gekc/detail/grad_tucker.hpp"
#include "gekc/model.hpp"

namespace gekc::ebm {

struct Workspace {
  // lifted gradient buffers for ComplEx
  DenseMatrix ga, gp, gb;
  // flattened RESCAL relation table (|R| x d*d) and its gradient
  DenseMatrix wflat, gwflat;
  bool has_lifted = false;
  bool has_wflat = false;
};

// One softmax direction over the rows of `table` with fixed per-triple
// context features F: loss = coef * sum_t (logsumexp_c f_t . table_c -
// f_t . table_true). Gradients go to gtable and gf.
inline double direction_loss(const DenseMatrix& table, const DenseMatrix& f,
                             std::span<const std::int32_t> truth, double coef,
                             std::size_t block_elems, DenseMatrix& gtable,
                             DenseMatrix& gf) {
  const std::size_t nb = f.rows(), k = f.cols(), n = table.rows();
  const std::size_t be = std::max<std::size_t>(1, std::min(n, std::max<std::size_t>(
                                                                   1, block_elems / std::max<std::size_t>(1, nb))));
  DenseMatrix block(nb, be, 0.0);
  std::vector<double> rowmax(nb, -std::numeric_limits<double>::infinity());
  auto fill_block = [&](std::size_t lo, std::size_t hi) {
    const std::size_t width = hi - lo;
    for (std::size_t t = 0; t < nb; ++t) {
      const double* ft = f.data() + t * k;
      double* bt = block.data() + t * be;
      for (std::size_t c = 0; c < width; ++c) {
        const double* tc = table.data() + (lo + c) * k;
        double acc = 0.0;
        for (std::size_t x = 0; x < k; ++x) acc += ft[x] * tc[x];
        bt[c] = acc;
      }
    }
  };
  for (std::size_t lo = 0; lo < n; lo += be) {
    const std::size_t hi = std::min(n, lo + be);
    fill_block(lo, hi);
    for (std::size_t t = 0; t < nb; ++t) {
      const double* bt = block.data() + t * be;
      for (std::size_t c = 0; c < hi - lo; ++c) rowmax[t] = std::max(rowmax[t], bt[c]);
    }
  }
  std::vector<double> expsum(nb, 0.0);
  for (std::size_t lo = 0; lo < n; lo += be) {
    const std::size_t hi = std::min(n, lo + be);
    fill_block(lo, hi);
    for (std::size_t t = 0; t < nb; ++t) {
      const double* bt = block.data() + t * be;
      double acc = 0.0;
      for (std::size_t c = 0; c < hi - lo; ++c) acc += std::exp(bt[c] - rowmax[t]);
      expsum[t] += acc;
    }
  }
  double loss = 0.0;
  std::vector<double> lse(nb);
  for (std::size_t t = 0; t < nb; ++t) {
    lse[t] = rowmax[t] + std::log(expsum[t]);
    loss += coef * (lse[t] - dot(f.row(t), table.row(std::size_t(truth[t]))));
  }
  // gradient sweep: P = exp(logits - lse) minus the one-hot truth
  DenseMatrix tblock(be, k, 0.0);
  for (std::size_t lo = 0; lo < n; lo += be) {
    const std::size_t hi = std::min(n, lo + be);
    const std::size_t width = hi - lo;
    fill_block(lo, hi);
    for (std::size_t t = 0; t < nb; ++t) {
      double* bt = block.data() + t * be;
      for (std::size_t c = 0; c < width; ++c) bt[c] = coef * std::exp(bt[c] - lse[t]);
      if (std::size_t(truth[t]) >= lo && std::size_t(truth[t]) < hi)
        bt[std::size_t(truth[t]) - lo] -= coef;
      for (std::size_t c = width; c < be; ++c) bt[c] = 0.0;
    }
    // gtable[lo:hi] += P^T F ; gf += P T[lo:hi]
    for (std::size_t t = 0; t < nb; ++t) {
      const double* bt = block.data() + t * be;
      const double* ft = f.data() + t * k;
      for (std::size_t c = 0; c < width; ++c) {
        const double pc = bt[c];
        if (pc == 0.0) continue;
        double* gt = gtable.data() + (lo + c) * k;
        for (std::size_t x = 0; x < k; ++x) gt[x] += pc * ft[x];
      }
    }
    for (std::size_t c = 0; c < width; ++c) {
      double* tb = tblock.data() + c * k;
      const double* tc = table.data() + (lo + c) * k;
      for (std::size_t x = 0; x < k; ++x) tb[x] = tc[x];
    }
    for (std::size_t t = 0; t < nb; ++t) {
      const double* bt = block.data() + t * be;
      double* gft = gf.data() + t * k;
      for (std::size_t c = 0; c < width; ++c) {
        const double pc = bt[c];
        if (pc == 0.0) continue;
        const double* tb = tblock.data() + c * k;
        for (std::size_t x = 0; x < k; ++x) gft[x] += pc * tb[x];
      }
    }
  }
  return loss;
}

// Builds the per-triple context features for one direction; returns the
// candidate table and where its gradient should accumulate.
inline const DenseMatrix& setup_direction(const Model& m, Slot target,
                                          std::span<const Triple> batch, Workspace& ws,
                                          ModelGrads& g, DenseMatrix& f,
                                          DenseMatrix*& gtable,
                                          std::vector<std::int32_t>& truth) {
  ensure_cache(m);
  const std::size_t nb = batch.size();
  truth.resize(nb);
  switch (m.family) {
    case ModelFamily::CP: {
      const auto& p = m.cp();
      const std::size_t d = p.u.cols();
      f = DenseMatrix(nb, d);
      for (std::size_t t = 0; t < nb; ++t) {
        const Triple& tr = batch[t];
        auto r1 = target == Slot::Object ? p.u.row(tr.subject)
                  : target == Slot::Subject ? p.w.row(tr.predicate)
                                            : p.u.row(tr.subject);
        auto r2 = target == Slot::Object ? p.w.row(tr.predicate)
                  : target == Slot::Subject ? p.v.row(tr.object)
                                            : p.v.row(tr.object);
        for (std::size_t i = 0; i < d; ++i) f(t, i) = r1[i] * r2[i];
        truth[t] = target == Slot::Object ? tr.object
                   : target == Slot::Subject ? tr.subject
                                             : tr.predicate;
      }
      gtable = target == Slot::Object ? &g.v : target == Slot::Subject ? &g.u : &g.w;
      return target == Slot::Object ? p.v : target == Slot::Subject ? p.u : p.w;
    }
    case ModelFamily::ComplEx: {
      const ModelCache& c = m.cache;
      const std::size_t d4 = c.lift_a.cols();
      if (!ws.has_lifted) {
        ws.ga = DenseMatrix(c.lift_a.rows(), d4, 0.0);
        ws.gb = DenseMatrix(c.lift_b.rows(), d4, 0.0);
        ws.gp = DenseMatrix(c.lift_p.rows(), d4, 0.0);
        ws.has_lifted = true;
      }
      f = DenseMatrix(nb, d4);
      for (std::size_t t = 0; t < nb; ++t) {
        const Triple& tr = batch[t];
        auto r1 = target == Slot::Object ? c.lift_a.row(tr.subject)
                  : target == Slot::Subject ? c.lift_p.row(tr.predicate)
                                            : c.lift_a.row(tr.subject);
        auto r2 = target == Slot::Object ? c.lift_p.row(tr.predicate)
                  : target == Slot::Subject ? c.lift_b.row(tr.object)
                                            : c.lift_b.row(tr.object);
        for (std::size_t i = 0; i < d4; ++i) f(t, i) = r1[i] * r2[i];
        truth[t] = target == Slot::Object ? tr.object
                   : target == Slot::Subject ? tr.subject
                                             : tr.predicate;
      }
      gtable = target == Slot::Object ? &ws.gb : target == Slot::Subject ? &ws.ga : &ws.gp;
      return target == Slot::Object ? c.lift_b
             : target == Slot::Subject ? c.lift_a
                                       : c.lift_p;
    }
    case ModelFamily::RESCAL: {
      const auto& p = m.rs();
      const std::size_t d = p.e.cols();
      if (target == Slot::Predicate) {
        if (!ws.has_wflat) {
          ws.wflat = DenseMatrix(p.w.size(), d * d);
          for (std::size_t r = 0; r < p.w.size(); ++r)
            for (std::size_t x = 0; x < d * d; ++x) ws.wflat(r, x) = p.w[r].data()[x];
          ws.gwflat = DenseMatrix(p.w.size(), d * d, 0.0);
          ws.has_wflat = true;
        }
        f = DenseMatrix(nb, d * d);
        for (std::size_t t = 0; t < nb; ++t) {
          const Triple& tr = batch[t];
          auto es = p.e.row(tr.subject), eo = p.e.row(tr.object);
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) f(t, i * d + j) = es[i] * eo[j];
          truth[t] = tr.predicate;
        }
        gtable = &ws.gwflat;
        return ws.wflat;
      }
      f = DenseMatrix(nb, d);
      for (std::size_t t = 0; t < nb; ++t) {
        const Triple& tr = batch[t];
        auto x = target == Slot::Object
                     ? rsfam::wt_x(p.w[tr.predicate], p.e.row(tr.subject))
                     : rsfam::w_y(p.w[tr.predicate], p.e.row(tr.object));
        for (std::size_t i = 0; i < d; ++i) f(t, i) = x[i];
        truth[t] = target == Slot::Object ? tr.object : tr.subject;
      }
      gtable = &g.e;
      return p.e;
    }
    case ModelFamily::TuckER: {
      const auto& p = m.tk();
      if (target == Slot::Predicate) {
        f = DenseMatrix(nb, p.dr);
        for (std::size_t t = 0; t < nb; ++t) {
          const Triple& tr = batch[t];
          auto u = tkfam::ctx_predicate(p, p.e.row(tr.subject), p.e.row(tr.object));
          for (std::size_t j = 0; j < p.dr; ++j) f(t, j) = u[j];
          truth[t] = tr.predicate;
        }
        gtable = &g.tw;
        return p.w;
      }
      f = DenseMatrix(nb, p.de);
      for (std::size_t t = 0; t < nb; ++t) {
        const Triple& tr = batch[t];
        auto q = target == Slot::Object
                     ? tkfam::ctx_object(p, p.e.row(tr.subject), p.w.row(tr.predicate))
                     : tkfam::ctx_subject(p, p.w.row(tr.predicate), p.e.row(tr.object));
        for (std::size_t i = 0; i < p.de; ++i) f(t, i) = q[i];
        truth[t] = target == Slot::Object ? tr.object : tr.subject;
      }
      gtable = &g.te;
      return p.e;
    }
  }
  throw ArgumentError("unknown family");
}

// Push df (gradient w.r.t. the context features) back onto the parameters.
inline void unchain_context(const Model& m, Slot target, std::span<const Triple> batch,
                            const DenseMatrix& gf, Workspace& ws, ModelGrads& g) {
  switch (m.family) {
    case ModelFamily::CP: {
      const auto& p = m.cp();
      const std::size_t d = p.u.cols();
      for (std::size_t t = 0; t < batch.size(); ++t) {
        const Triple& tr = batch[t];
        const double* gft = gf.data() + t * d;
        if (target == Slot::Object) {
          for (std::size_t i = 0; i < d; ++i) {
            g.u(tr.subject, i) += gft[i] * p.w(tr.predicate, i);
            g.w(tr.predicate, i) += gft[i] * p.u(tr.subject, i);
          }
        } else if (target == Slot::Subject) {
          for (std::size_t i = 0; i < d; ++i) {
            g.w(tr.predicate, i) += gft[i] * p.v(tr.object, i);
            g.v(tr.object, i) += gft[i] * p.w(tr.predicate, i);
          }
        } else {
          for (std::size_t i = 0; i < d; ++i) {
            g.u(tr.subject, i) += gft[i] * p.v(tr.object, i);
            g.v(tr.object, i) += gft[i] * p.u(tr.subject, i);
          }
        }
      }
      return;
    }
    case ModelFamily::ComplEx: {
      const ModelCache& c = m.cache;
      const std::size_t d4 = c.lift_a.cols();
      for (std::size_t t = 0; t < batch.size(); ++t) {
        const Triple& tr = batch[t];
        const double* gft = gf.data() + t * d4;
        for (std::size_t i = 0; i < d4; ++i) {
          if (target == Slot::Object) {
            ws.ga(tr.subject, i) += gft[i] * c.lift_p(tr.predicate, i);
            ws.gp(tr.predicate, i) += gft[i] * c.lift_a(tr.subject, i);
          } else if (target == Slot::Subject) {
            ws.gp(tr.predicate, i) += gft[i] * c.lift_b(tr.object, i);
            ws.gb(tr.object, i) += gft[i] * c.lift_p(tr.predicate, i);
          } else {
            ws.ga(tr.subject, i) += gft[i] * c.lift_b(tr.object, i);
            ws.gb(tr.object, i) += gft[i] * c.lift_a(tr.subject, i);
          }
        }
      }
      return;
    }
    case ModelFamily::RESCAL: {
      const auto& p = m.rs();
      const std::size_t d = p.e.cols();
      for (std::size_t t = 0; t < batch.size(); ++t) {
        const Triple& tr = batch[t];
        const double* gft = gf.data() + t * gf.cols();
        if (target == Slot::Predicate) {
          auto es = p.e.row(tr.subject), eo = p.e.row(tr.object);
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              g.e(tr.subject, i) += gft[i * d + j] * eo[j];
              g.e(tr.object, j) += gft[i * d + j] * es[i];
            }
        } else if (target == Slot::Object) {
          // f = W^T e_s
          const DenseMatrix& w = p.w[tr.predicate];
          auto es = p.e.row(tr.subject);
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              g.e(tr.subject, i) += w(i, j) * gft[j];
              g.wr[tr.predicate](i, j) += es[i] * gft[j];
            }
        } else {
          // f = W e_o
          const DenseMatrix& w = p.w[tr.predicate];
          auto eo = p.e.row(tr.object);
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              g.e(tr.object, j) += w(i, j) * gft[i];
              g.wr[tr.predicate](i, j) += gft[i] * eo[j];
            }
        }
      }
      return;
    }
    case ModelFamily::TuckER: {
      const auto& p = m.tk();
      for (std::size_t t = 0; t < batch.size(); ++t) {
        const Triple& tr = batch[t];
        std::span<const double> gft(gf.data() + t * gf.cols(), gf.cols());
        auto es = p.e.row(tr.subject), wr = p.w.row(tr.predicate), eo = p.e.row(tr.object);
        if (target == Slot::Object) {
          auto gs = tkfam::ctx_subject(p, wr, gft);
          auto gr = tkfam::ctx_predicate(p, es, gft);
          for (std::size_t i = 0; i < p.de; ++i) g.te(tr.subject, i) += gs[i];
          for (std::size_t j = 0; j < p.dr; ++j) g.tw(tr.predicate, j) += gr[j];
          tkgrad::add_outer3(es, wr, gft, 1.0, g.core, p.de, p.dr);
        } else if (target == Slot::Subject) {
          auto go = tkfam::ctx_object(p, gft, wr);
          auto gr = tkfam::ctx_predicate(p, gft, eo);
          for (std::size_t k = 0; k < p.de; ++k) g.te(tr.object, k) += go[k];
          for (std::size_t j = 0; j < p.dr; ++j) g.tw(tr.predicate, j) += gr[j];
          tkgrad::add_outer3(gft, wr, eo, 1.0, g.core, p.de, p.dr);
        } else {
          auto gs = tkfam::ctx_subject(p, gft, eo);
          auto go = tkfam::ctx_object(p, es, gft);
          for (std::size_t i = 0; i < p.de; ++i) {
            g.te(tr.subject, i) += gs[i];
            g.te(tr.object, i) += go[i];
          }
          tkgrad::add_outer3(es, gft, eo, 1.0, g.core, p.de, p.dr);
        }
      }
      return;
    }
  }
}

// Flush workspace buffers (lifted / flattened tables) into the real grads.
inline void flush(Workspace& ws, ModelGrads& g) {
  if (ws.has_lifted) {
    cxfam::unlift_entity_grad(ws.ga, ws.gb, g.e_re, g.e_im);
    cxfam::unlift_predicate_grad(ws.gp, g.w_re, g.w_im);
    ws.has_lifted = false;
  }
  if (ws.has_wflat) {
    const std::size_t dd = ws.gwflat.cols();
    for (std::size_t r = 0; r < ws.gwflat.rows(); ++r)
      for (std::size_t x = 0; x < dd; ++x) g.wr[r].data()[x] += ws.gwflat(r, x);
    ws.has_wflat = false;
  }
}

}  // namespace gekc::ebm
