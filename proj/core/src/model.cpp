#include "medlab/model.hpp"

#include <cmath>
#include <stdexcept>

namespace medlab {

namespace {

constexpr double kLnEps = 1e-5;

// C[m x n] += A[m x k] * B[k x n]
void matmul_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B^T where B is [k x n]
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * n;
    double* crow = c + static_cast<size_t>(i) * k;
    for (int r = 0; r < k; ++r) {
      const double* brow = b + static_cast<size_t>(r) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[r] += acc;
    }
  }
}

// C[k x n] += A^T * B where A is [m x k], B is [m x n]
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int r = 0; r < k; ++r) {
      const double av = arow[r];
      double* crow = c + static_cast<size_t>(r) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void linear_forward(const double* x, const double* w, const double* b, double* y,
                    int rows, int in_dim, int out_dim) {
  for (int i = 0; i < rows; ++i) {
    double* yrow = y + static_cast<size_t>(i) * out_dim;
    for (int j = 0; j < out_dim; ++j) yrow[j] = b[j];
  }
  matmul_nn_acc(x, w, y, rows, in_dim, out_dim);
}

// dx += dy * W^T, dW += x^T * dy, db += column sums of dy
void linear_backward(const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db, int rows, int in_dim, int out_dim) {
  matmul_nt_acc(dy, w, dx, rows, out_dim, in_dim);
  matmul_tn_acc(x, dy, dw, rows, in_dim, out_dim);
  for (int i = 0; i < rows; ++i) {
    const double* dyrow = dy + static_cast<size_t>(i) * out_dim;
    for (int j = 0; j < out_dim; ++j) db[j] += dyrow[j];
  }
}

void layernorm_forward(const double* x, const double* g, const double* b, int rows,
                       int dim, double* xhat, double* rstd, double* out) {
  for (int i = 0; i < rows; ++i) {
    const double* xr = x + static_cast<size_t>(i) * dim;
    double* xh = xhat + static_cast<size_t>(i) * dim;
    double* o = out + static_cast<size_t>(i) * dim;
    double mean = 0.0;
    for (int j = 0; j < dim; ++j) mean += xr[j];
    mean /= dim;
    double var = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double dv = xr[j] - mean;
      var += dv * dv;
    }
    var /= dim;
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[i] = rs;
    for (int j = 0; j < dim; ++j) {
      xh[j] = (xr[j] - mean) * rs;
      o[j] = g[j] * xh[j] + b[j];
    }
  }
}

// dx += layernorm backward; dg, db accumulated.
void layernorm_backward(const double* xhat, const double* rstd, const double* g,
                        const double* dout, int rows, int dim, double* dx, double* dg,
                        double* db) {
  for (int i = 0; i < rows; ++i) {
    const double* xh = xhat + static_cast<size_t>(i) * dim;
    const double* do_ = dout + static_cast<size_t>(i) * dim;
    double* dxr = dx + static_cast<size_t>(i) * dim;
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double dxh = do_[j] * g[j];
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xh[j];
      dg[j] += do_[j] * xh[j];
      db[j] += do_[j];
    }
    mean_dxhat /= dim;
    mean_dxhat_xhat /= dim;
    const double rs = rstd[i];
    for (int j = 0; j < dim; ++j) {
      const double dxh = do_[j] * g[j];
      dxr[j] += rs * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
    }
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

void softmax_row(double* row, int n) {
  double mx = row[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < n; ++j) row[j] *= inv;
}

}  // namespace

ParamLayout ParamLayout::make(const ModelConfig& cfg) {
  ParamLayout lay;
  size_t off = 0;
  auto take = [&off](size_t n) {
    const size_t at = off;
    off += n;
    return at;
  };
  const size_t d = static_cast<size_t>(cfg.d_model);
  lay.embedding = take(static_cast<size_t>(cfg.vocab_size) * d);
  lay.positional = take(static_cast<size_t>(cfg.max_len) * d);
  lay.layers.resize(static_cast<size_t>(cfg.n_layers));
  for (auto& l : lay.layers) {
    l.ln1_g = take(d);
    l.ln1_b = take(d);
    l.wq = take(d * d);
    l.bq = take(d);
    l.wk = take(d * d);
    l.bk = take(d);
    l.wv = take(d * d);
    l.bv = take(d);
    l.wo = take(d * d);
    l.bo = take(d);
    l.ln2_g = take(d);
    l.ln2_b = take(d);
    l.w_ff1 = take(d * static_cast<size_t>(cfg.d_ff));
    l.b_ff1 = take(static_cast<size_t>(cfg.d_ff));
    l.w_ff2 = take(static_cast<size_t>(cfg.d_ff) * d);
    l.b_ff2 = take(d);
  }
  lay.ln_f_g = take(d);
  lay.ln_f_b = take(d);
  lay.w_out = take(d * static_cast<size_t>(cfg.vocab_size));
  lay.b_out = take(static_cast<size_t>(cfg.vocab_size));
  lay.total = off;
  return lay;
}

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  if (cfg.d_model % cfg.n_heads != 0) {
    throw std::invalid_argument("init_params: d_model must be divisible by n_heads");
  }
  ModelParams p;
  p.config = cfg;
  p.layout = ParamLayout::make(cfg);
  p.flat.assign(p.layout.total, 0.0);

  const double scale = 0.02;
  auto fill_normal = [&](size_t off, size_t n) {
    for (size_t i = 0; i < n; ++i) p.flat[off + i] = scale * rng.normal();
  };
  auto fill_ones = [&](size_t off, size_t n) {
    for (size_t i = 0; i < n; ++i) p.flat[off + i] = 1.0;
  };
  const size_t d = static_cast<size_t>(cfg.d_model);
  fill_normal(p.layout.embedding, static_cast<size_t>(cfg.vocab_size) * d);
  fill_normal(p.layout.positional, static_cast<size_t>(cfg.max_len) * d);
  for (const auto& l : p.layout.layers) {
    fill_ones(l.ln1_g, d);
    fill_normal(l.wq, d * d);
    fill_normal(l.wk, d * d);
    fill_normal(l.wv, d * d);
    fill_normal(l.wo, d * d);
    fill_ones(l.ln2_g, d);
    fill_normal(l.w_ff1, d * static_cast<size_t>(cfg.d_ff));
    fill_normal(l.w_ff2, static_cast<size_t>(cfg.d_ff) * d);
  }
  fill_ones(p.layout.ln_f_g, d);
  // w_out and b_out stay zero: untrained output is exactly uniform.
  return p;
}

ForwardOutput forward(const ModelParams& params, std::span<const TokenId> tokens,
                      ForwardCache* cache) {
  const ModelConfig& cfg = params.config;
  const int L = static_cast<int>(tokens.size());
  if (L == 0) throw std::invalid_argument("forward: empty input");
  if (L > cfg.max_len) throw std::invalid_argument("forward: input exceeds max_len");
  for (TokenId t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw std::invalid_argument("forward: token id outside vocabulary");
    }
  }

  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const size_t ld = static_cast<size_t>(L) * d;

  ForwardCache local;
  ForwardCache& cc = cache ? *cache : local;
  cc.seq_len = L;
  cc.layers.assign(static_cast<size_t>(cfg.n_layers), {});

  // Embedding + positional.
  cc.x0.assign(ld, 0.0);
  for (int i = 0; i < L; ++i) {
    const double* emb = params.at(params.layout.embedding) + static_cast<size_t>(tokens[i]) * d;
    const double* pos = params.at(params.layout.positional) + static_cast<size_t>(i) * d;
    double* x = cc.x0.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) x[j] = emb[j] + pos[j];
  }

  const std::vector<double>* x_in = &cc.x0;
  for (int li = 0; li < cfg.n_layers; ++li) {
    const auto& lp = params.layout.layers[static_cast<size_t>(li)];
    auto& lc = cc.layers[static_cast<size_t>(li)];

    lc.ln1_xhat.assign(ld, 0.0);
    lc.ln1_rstd.assign(static_cast<size_t>(L), 0.0);
    lc.ln1_out.assign(ld, 0.0);
    layernorm_forward(x_in->data(), params.at(lp.ln1_g), params.at(lp.ln1_b), L, d,
                      lc.ln1_xhat.data(), lc.ln1_rstd.data(), lc.ln1_out.data());

    lc.q.assign(ld, 0.0);
    lc.k.assign(ld, 0.0);
    lc.v.assign(ld, 0.0);
    linear_forward(lc.ln1_out.data(), params.at(lp.wq), params.at(lp.bq), lc.q.data(), L, d, d);
    linear_forward(lc.ln1_out.data(), params.at(lp.wk), params.at(lp.bk), lc.k.data(), L, d, d);
    linear_forward(lc.ln1_out.data(), params.at(lp.wv), params.at(lp.bv), lc.v.data(), L, d, d);

    lc.probs.assign(static_cast<size_t>(H) * L * L, 0.0);
    lc.ctx.assign(ld, 0.0);
    for (int h = 0; h < H; ++h) {
      double* probs_h = lc.probs.data() + static_cast<size_t>(h) * L * L;
      for (int i = 0; i < L; ++i) {
        const double* qi = lc.q.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd;
        double* row = probs_h + static_cast<size_t>(i) * L;
        for (int j = 0; j < L; ++j) {
          const double* kj = lc.k.data() + static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd;
          double acc = 0.0;
          for (int e = 0; e < hd; ++e) acc += qi[e] * kj[e];
          row[j] = acc * att_scale;
        }
        softmax_row(row, L);
        double* ci = lc.ctx.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd;
        for (int j = 0; j < L; ++j) {
          const double pij = row[j];
          const double* vj = lc.v.data() + static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd;
          for (int e = 0; e < hd; ++e) ci[e] += pij * vj[e];
        }
      }
    }

    lc.resid1.assign(ld, 0.0);
    linear_forward(lc.ctx.data(), params.at(lp.wo), params.at(lp.bo), lc.resid1.data(), L, d, d);
    for (size_t i = 0; i < ld; ++i) lc.resid1[i] += (*x_in)[i];

    lc.ln2_xhat.assign(ld, 0.0);
    lc.ln2_rstd.assign(static_cast<size_t>(L), 0.0);
    lc.ln2_out.assign(ld, 0.0);
    layernorm_forward(lc.resid1.data(), params.at(lp.ln2_g), params.at(lp.ln2_b), L, d,
                      lc.ln2_xhat.data(), lc.ln2_rstd.data(), lc.ln2_out.data());

    lc.ff_pre.assign(static_cast<size_t>(L) * cfg.d_ff, 0.0);
    linear_forward(lc.ln2_out.data(), params.at(lp.w_ff1), params.at(lp.b_ff1),
                   lc.ff_pre.data(), L, d, cfg.d_ff);
    lc.ff_act.resize(lc.ff_pre.size());
    for (size_t i = 0; i < lc.ff_pre.size(); ++i) lc.ff_act[i] = gelu(lc.ff_pre[i]);

    lc.resid2.assign(ld, 0.0);
    linear_forward(lc.ff_act.data(), params.at(lp.w_ff2), params.at(lp.b_ff2),
                   lc.resid2.data(), L, cfg.d_ff, d);
    for (size_t i = 0; i < ld; ++i) lc.resid2[i] += lc.resid1[i];

    x_in = &lc.resid2;
  }

  cc.lnf_xhat.assign(ld, 0.0);
  cc.lnf_rstd.assign(static_cast<size_t>(L), 0.0);
  cc.lnf_out.assign(ld, 0.0);
  layernorm_forward(x_in->data(), params.at(params.layout.ln_f_g),
                    params.at(params.layout.ln_f_b), L, d, cc.lnf_xhat.data(),
                    cc.lnf_rstd.data(), cc.lnf_out.data());

  ForwardOutput out;
  out.seq_len = L;
  out.vocab_size = cfg.vocab_size;
  out.logprob.assign(static_cast<size_t>(L) * cfg.vocab_size, 0.0);
  linear_forward(cc.lnf_out.data(), params.at(params.layout.w_out),
                 params.at(params.layout.b_out), out.logprob.data(), L, d, cfg.vocab_size);
  // log-softmax per row
  for (int i = 0; i < L; ++i) {
    double* row = out.logprob.data() + static_cast<size_t>(i) * cfg.vocab_size;
    double mx = row[0];
    for (int j = 1; j < cfg.vocab_size; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < cfg.vocab_size; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < cfg.vocab_size; ++j) row[j] -= lse;
  }
  return out;
}

std::vector<double> backward_logprob(const ModelParams& params,
                                     std::span<const TokenId> tokens,
                                     const ForwardCache& cache,
                                     const ForwardOutput& output,
                                     std::span<const TokenId> targets,
                                     std::span<const double> weights) {
  const ModelConfig& cfg = params.config;
  const int L = cache.seq_len;
  if (static_cast<int>(tokens.size()) != L || static_cast<int>(targets.size()) != L ||
      static_cast<int>(weights.size()) != L) {
    throw std::invalid_argument("backward_logprob: length mismatch");
  }
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const size_t ld = static_cast<size_t>(L) * d;

  std::vector<double> grad(params.layout.total, 0.0);

  // d objective / d logits = w * (onehot(target) - softmax)
  std::vector<double> dlogits(static_cast<size_t>(L) * cfg.vocab_size, 0.0);
  for (int i = 0; i < L; ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    const double* lp = output.logprob.data() + static_cast<size_t>(i) * cfg.vocab_size;
    double* dl = dlogits.data() + static_cast<size_t>(i) * cfg.vocab_size;
    for (int j = 0; j < cfg.vocab_size; ++j) dl[j] = -w * std::exp(lp[j]);
    dl[targets[i]] += w;
  }

  std::vector<double> d_lnf_out(ld, 0.0);
  linear_backward(cache.lnf_out.data(), params.at(params.layout.w_out), dlogits.data(),
                  d_lnf_out.data(), grad.data() + params.layout.w_out,
                  grad.data() + params.layout.b_out, L, d, cfg.vocab_size);

  std::vector<double> dx(ld, 0.0);
  layernorm_backward(cache.lnf_xhat.data(), cache.lnf_rstd.data(),
                     params.at(params.layout.ln_f_g), d_lnf_out.data(), L, d, dx.data(),
                     grad.data() + params.layout.ln_f_g, grad.data() + params.layout.ln_f_b);

  std::vector<double> d_ff_act(static_cast<size_t>(L) * cfg.d_ff);
  std::vector<double> d_ff_pre(static_cast<size_t>(L) * cfg.d_ff);
  std::vector<double> d_ln_out(ld);
  std::vector<double> d_resid(ld);
  std::vector<double> dq(ld), dk(ld), dv(ld), dctx(ld);

  for (int li = cfg.n_layers - 1; li >= 0; --li) {
    const auto& lp = params.layout.layers[static_cast<size_t>(li)];
    const auto& lc = cache.layers[static_cast<size_t>(li)];

    // FFN sublayer: resid2 = resid1 + W2(gelu(W1(ln2(resid1)))).
    std::fill(d_ff_act.begin(), d_ff_act.end(), 0.0);
    linear_backward(lc.ff_act.data(), params.at(lp.w_ff2), dx.data(), d_ff_act.data(),
                    grad.data() + lp.w_ff2, grad.data() + lp.b_ff2, L, cfg.d_ff, d);
    for (size_t i = 0; i < d_ff_pre.size(); ++i) {
      d_ff_pre[i] = d_ff_act[i] * gelu_grad(lc.ff_pre[i]);
    }
    std::fill(d_ln_out.begin(), d_ln_out.end(), 0.0);
    linear_backward(lc.ln2_out.data(), params.at(lp.w_ff1), d_ff_pre.data(),
                    d_ln_out.data(), grad.data() + lp.w_ff1, grad.data() + lp.b_ff1, L, d,
                    cfg.d_ff);
    // dx currently holds d/d resid2; the residual path passes it through.
    layernorm_backward(lc.ln2_xhat.data(), lc.ln2_rstd.data(), params.at(lp.ln2_g),
                       d_ln_out.data(), L, d, dx.data(), grad.data() + lp.ln2_g,
                       grad.data() + lp.ln2_b);

    // Attention sublayer: resid1 = input + Wo(attn(ln1(input))).
    std::fill(dctx.begin(), dctx.end(), 0.0);
    linear_backward(lc.ctx.data(), params.at(lp.wo), dx.data(), dctx.data(),
                    grad.data() + lp.wo, grad.data() + lp.bo, L, d, d);

    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    std::vector<double> dscores(static_cast<size_t>(L), 0.0);
    for (int h = 0; h < H; ++h) {
      const double* probs_h = lc.probs.data() + static_cast<size_t>(h) * L * L;
      for (int i = 0; i < L; ++i) {
        const double* prow = probs_h + static_cast<size_t>(i) * L;
        const double* dci = dctx.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd;
        // dprobs[j] = dot(dctx_i, v_j); softmax backward within the row.
        double dot_pd = 0.0;
        for (int j = 0; j < L; ++j) {
          const double* vj = lc.v.data() + static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd;
          double acc = 0.0;
          for (int e = 0; e < hd; ++e) acc += dci[e] * vj[e];
          dscores[static_cast<size_t>(j)] = acc;
          dot_pd += prow[j] * acc;
          double* dvj = dv.data() + static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd;
          const double pij = prow[j];
          for (int e = 0; e < hd; ++e) dvj[e] += pij * dci[e];
        }
        const double* qi = lc.q.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd;
        double* dqi = dq.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * hd;
        for (int j = 0; j < L; ++j) {
          const double ds = prow[j] * (dscores[static_cast<size_t>(j)] - dot_pd) * att_scale;
          const double* kj = lc.k.data() + static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd;
          double* dkj = dk.data() + static_cast<size_t>(j) * d + static_cast<size_t>(h) * hd;
          for (int e = 0; e < hd; ++e) {
            dqi[e] += ds * kj[e];
            dkj[e] += ds * qi[e];
          }
        }
      }
    }

    std::fill(d_ln_out.begin(), d_ln_out.end(), 0.0);
    linear_backward(lc.ln1_out.data(), params.at(lp.wq), dq.data(), d_ln_out.data(),
                    grad.data() + lp.wq, grad.data() + lp.bq, L, d, d);
    linear_backward(lc.ln1_out.data(), params.at(lp.wk), dk.data(), d_ln_out.data(),
                    grad.data() + lp.wk, grad.data() + lp.bk, L, d, d);
    linear_backward(lc.ln1_out.data(), params.at(lp.wv), dv.data(), d_ln_out.data(),
                    grad.data() + lp.wv, grad.data() + lp.bv, L, d, d);
    layernorm_backward(lc.ln1_xhat.data(), lc.ln1_rstd.data(), params.at(lp.ln1_g),
                       d_ln_out.data(), L, d, dx.data(), grad.data() + lp.ln1_g,
                       grad.data() + lp.ln1_b);
  }

  // Embedding + positional.
  for (int i = 0; i < L; ++i) {
    const double* dxi = dx.data() + static_cast<size_t>(i) * d;
    double* demb = grad.data() + params.layout.embedding + static_cast<size_t>(tokens[i]) * d;
    double* dpos = grad.data() + params.layout.positional + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      demb[j] += dxi[j];
      dpos[j] += dxi[j];
    }
  }
  return grad;
}

double entropy_nats(std::span<const double> logprob_row) {
  double h = 0.0;
  for (double lp : logprob_row) {
    if (lp > -700.0) h -= std::exp(lp) * lp;
  }
  return h < 0.0 ? 0.0 : h;
}

}  // namespace medlab
