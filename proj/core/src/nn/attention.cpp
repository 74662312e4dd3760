// SPDX-License-Identifier: Apache-2.0
#include "secloc/nn/attention.hpp"

#include <cmath>

#include "secloc/errors.hpp"

namespace secloc::nn {

namespace {

// y[r] = sum_c M[r, c] x[c] for an [rows, cols] block.
void matvec(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// gM += g x^T and gx += M^T g.
void matvec_backward(const double* m, std::size_t rows, std::size_t cols, const double* x, const double* g,
                     double* gm, double* gx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* row = m + r * cols;
    double* grow = gm + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      grow[c] += gr * x[c];
      gx[c] += gr * row[c];
    }
  }
}

}  // namespace

AttentionFusion::AttentionFusion(ParamStore& params, const std::string& name, std::size_t token_dim,
                                 std::size_t heads, std::size_t key_dim, std::size_t value_dim, AttentionMode mode)
    : token_dim_(token_dim), heads_(heads), key_dim_(key_dim), value_dim_(value_dim), mode_(mode) {
  if (heads == 0) throw ShapeMismatch("attention needs at least one head");
  if (mode == AttentionMode::GlobalQuery) {
    query_ = params.add(name + ".query", Tensor({heads, key_dim}));
  } else {
    query_ = params.add(name + ".query_proj", Tensor({heads, key_dim, token_dim}));
  }
  key_proj_ = params.add(name + ".key_proj", Tensor({heads, key_dim, token_dim}));
  value_proj_ = params.add(name + ".value_proj", Tensor({heads, value_dim, token_dim}));
}

void AttentionFusion::init(ParamStore& params, InitRng& rng) const {
  auto fill = [&](Tensor& t, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  };
  const double proj_bound = std::sqrt(3.0 / static_cast<double>(token_dim_));
  fill(params[query_], mode_ == AttentionMode::GlobalQuery ? 1.0 : proj_bound);
  fill(params[key_proj_], proj_bound);
  fill(params[value_proj_], proj_bound);
}

void AttentionFusion::forward(const ParamStore& params, std::span<const double> tokens,
                              std::span<const std::uint8_t> mask, std::span<double> fused, std::span<double> weights,
                              Cache& cache) const {
  const std::size_t n = mask.size();
  if (tokens.size() != n * token_dim_) throw ShapeMismatch("attention tokens do not match the mask length");
  if (fused.size() != fused_dim()) throw ShapeMismatch("attention fused buffer has the wrong size");
  if (weights.size() != heads_ * n) throw ShapeMismatch("attention weight buffer has the wrong size");
  std::size_t n_present = 0;
  for (auto m : mask) n_present += m ? 1 : 0;
  if (n_present == 0) throw AllAnchorsMasked("attention fusion with every anchor masked");

  cache.n = n;
  cache.mask.assign(mask.begin(), mask.end());
  cache.keys.assign(n * heads_ * key_dim_, 0.0);
  cache.values.assign(n * heads_ * value_dim_, 0.0);
  cache.weights.assign(heads_ * n, 0.0);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(key_dim_));
  const double* wk = params[key_proj_].data();
  const double* wv = params[value_proj_].data();
  const double* q = params[query_].data();

  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const double* t = tokens.data() + i * token_dim_;
    for (std::size_t h = 0; h < heads_; ++h) {
      matvec(wk + h * key_dim_ * token_dim_, key_dim_, token_dim_, t, cache.keys.data() + (i * heads_ + h) * key_dim_);
      matvec(wv + h * value_dim_ * token_dim_, value_dim_, token_dim_, t,
             cache.values.data() + (i * heads_ + h) * value_dim_);
    }
  }

  std::vector<double> logits(n);
  if (mode_ == AttentionMode::GlobalQuery) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        if (mask[i]) {
          const double* k = cache.keys.data() + (i * heads_ + h) * key_dim_;
          for (std::size_t d = 0; d < key_dim_; ++d) s += q[h * key_dim_ + d] * k[d];
        }
        logits[i] = s * inv_sqrt;
      }
      masked_softmax(logits, mask, {cache.weights.data() + h * n, n});
    }
  } else {
    cache.queries.assign(n * heads_ * key_dim_, 0.0);
    cache.probs.assign(heads_ * n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[j]) continue;
      const double* t = tokens.data() + j * token_dim_;
      for (std::size_t h = 0; h < heads_; ++h) {
        matvec(q + h * key_dim_ * token_dim_, key_dim_, token_dim_, t,
               cache.queries.data() + (j * heads_ + h) * key_dim_);
      }
    }
    std::vector<double> column(n);
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        const double* qj = cache.queries.data() + (j * heads_ + h) * key_dim_;
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          if (mask[i]) {
            const double* k = cache.keys.data() + (i * heads_ + h) * key_dim_;
            for (std::size_t d = 0; d < key_dim_; ++d) s += qj[d] * k[d];
          }
          logits[i] = s * inv_sqrt;
        }
        masked_softmax(logits, mask, {cache.probs.data() + (h * n + j) * n, n});
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (mask[j]) column[m++] = cache.probs[(h * n + j) * n + i];
        }
        cache.weights[h * n + i] = canonical_sum({column.data(), m}) / static_cast<double>(n_present);
      }
    }
  }

  std::vector<double> terms(n);
  for (std::size_t h = 0; h < heads_; ++h) {
    for (std::size_t d = 0; d < value_dim_; ++d) {
      std::size_t m = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) terms[m++] = cache.weights[h * n + i] * cache.values[(i * heads_ + h) * value_dim_ + d];
      }
      fused[h * value_dim_ + d] = canonical_sum({terms.data(), m});
    }
  }
  std::copy(cache.weights.begin(), cache.weights.end(), weights.begin());
}

void AttentionFusion::backward(const ParamStore& params, std::span<const double> tokens,
                               std::span<const double> gfused, const Cache& cache, std::span<double> gtokens,
                               ParamStore& grads) const {
  const std::size_t n = cache.n;
  if (gtokens.size() != n * token_dim_ || tokens.size() != n * token_dim_) {
    throw ShapeMismatch("attention token gradient has the wrong size");
  }
  std::fill(gtokens.begin(), gtokens.end(), 0.0);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(key_dim_));
  const double* wk = params[key_proj_].data();
  const double* wv = params[value_proj_].data();
  const double* q = params[query_].data();
  double* gwk = grads[key_proj_].data();
  double* gwv = grads[value_proj_].data();
  double* gq = grads[query_].data();
  const auto& mask = cache.mask;
  std::size_t n_present = 0;
  for (auto m : mask) n_present += m ? 1 : 0;

  std::vector<double> galpha(n), glogit(n), gkey(key_dim_), gvalue(value_dim_);
  std::vector<double> gkeys(n * key_dim_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const double* go = gfused.data() + h * value_dim_;
    const double* alpha = cache.weights.data() + h * n;
    for (std::size_t i = 0; i < n; ++i) {
      galpha[i] = 0.0;
      if (!mask[i]) continue;
      const double* v = cache.values.data() + (i * heads_ + h) * value_dim_;
      double s = 0.0;
      for (std::size_t d = 0; d < value_dim_; ++d) {
        s += go[d] * v[d];
        gvalue[d] = alpha[i] * go[d];
      }
      galpha[i] = s;
      matvec_backward(wv + h * value_dim_ * token_dim_, value_dim_, token_dim_, tokens.data() + i * token_dim_,
                      gvalue.data(), gwv + h * value_dim_ * token_dim_, gtokens.data() + i * token_dim_);
    }

    std::fill(gkeys.begin(), gkeys.end(), 0.0);
    if (mode_ == AttentionMode::GlobalQuery) {
      masked_softmax_backward({alpha, n}, galpha, mask, glogit);
      for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const double* k = cache.keys.data() + (i * heads_ + h) * key_dim_;
        for (std::size_t d = 0; d < key_dim_; ++d) {
          gq[h * key_dim_ + d] += glogit[i] * inv_sqrt * k[d];
          gkeys[i * key_dim_ + d] = glogit[i] * inv_sqrt * q[h * key_dim_ + d];
        }
      }
    } else {
      std::vector<double> gprob(n), gquery(key_dim_);
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[j]) continue;
        for (std::size_t i = 0; i < n; ++i) gprob[i] = mask[i] ? galpha[i] / static_cast<double>(n_present) : 0.0;
        const double* p = cache.probs.data() + (h * n + j) * n;
        masked_softmax_backward({p, n}, gprob, mask, glogit);
        const double* qj = cache.queries.data() + (j * heads_ + h) * key_dim_;
        std::fill(gquery.begin(), gquery.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          if (!mask[i]) continue;
          const double* k = cache.keys.data() + (i * heads_ + h) * key_dim_;
          for (std::size_t d = 0; d < key_dim_; ++d) {
            gquery[d] += glogit[i] * inv_sqrt * k[d];
            gkeys[i * key_dim_ + d] += glogit[i] * inv_sqrt * qj[d];
          }
        }
        matvec_backward(q + h * key_dim_ * token_dim_, key_dim_, token_dim_, tokens.data() + j * token_dim_,
                        gquery.data(), gq + h * key_dim_ * token_dim_, gtokens.data() + j * token_dim_);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      std::copy(gkeys.begin() + static_cast<std::ptrdiff_t>(i * key_dim_),
                gkeys.begin() + static_cast<std::ptrdiff_t>((i + 1) * key_dim_), gkey.begin());
      matvec_backward(wk + h * key_dim_ * token_dim_, key_dim_, token_dim_, tokens.data() + i * token_dim_,
                      gkey.data(), gwk + h * key_dim_ * token_dim_, gtokens.data() + i * token_dim_);
    }
  }
}

}  // namespace secloc::nn
