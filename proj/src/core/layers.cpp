#include "dancerl/core/layers.hpp"

#include <algorithm>
#include <cmath>

#include "dancerl/core/errors.hpp"
#include "dancerl/core/kernels.hpp"

namespace dancerl {

Tensor Dropout::sample_mask(std::size_t rows, std::size_t cols) const {
  Tensor mask = Tensor::matrix(rows, cols, 1.0);
  if (!active()) return mask;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask.storage()) m = u(*rng) < rate ? 0.0 : keep;
  return mask;
}

// ---------------------------------------------------------------- Linear

Linear Linear::create(Parameters& params, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng, double init_std, bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = with_bias;
  Tensor w = Tensor::matrix(in, out);
  init_normal(w, rng, init_std);
  l.weight = params.add(name + ".weight", std::move(w));
  if (with_bias) l.bias = params.add(name + ".bias", Tensor::vector(out));
  return l;
}

Tensor Linear::forward(const Parameters& params, const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != in)
    throw ContractError("linear_forward: input " + x.shape_string() + " vs in=" +
                        std::to_string(in));
  const Tensor& w = params[weight];
  require_shape(w, in, out, "linear weight");
  Tensor y = Tensor::matrix(x.rows(), out);
  kernels::matmul(x.data(), w.data(), y.data(), x.rows(), in, out, false);
  if (has_bias) {
    const Tensor& b = params[bias];
    if (b.size() != out) throw ContractError("linear bias size mismatch");
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t j = 0; j < out; ++j) y(r, j) += b[j];
  }
  return y;
}

void Linear::forward_row(const Parameters& params, const double* x, double* y) const {
  kernels::serial::matmul(x, params[weight].data(), y, 1, in, out, false);
  if (has_bias) {
    const Tensor& b = params[bias];
    for (std::size_t j = 0; j < out; ++j) y[j] += b[j];
  }
}

Tensor Linear::backward(const Parameters& params, const Tensor& x, const Tensor& dy,
                        Gradients& grads, bool want_dx) const {
  require_shape(dy, x.rows(), out, "linear backward dy");
  kernels::matmul_at_acc(x.data(), dy.data(), grads[weight].data(), x.rows(), in, out);
  if (has_bias) {
    Tensor& db = grads[bias];
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t j = 0; j < out; ++j) db[j] += dy(r, j);
  }
  if (!want_dx) return {};
  Tensor dx = Tensor::matrix(x.rows(), in);
  kernels::matmul_bt(dy.data(), params[weight].data(), dx.data(), dy.rows(), out, in, false);
  return dx;
}

// ------------------------------------------------------------- LayerNorm

LayerNorm LayerNorm::create(Parameters& params, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.dim = dim;
  ln.gain = params.add(name + ".gain", Tensor::vector(dim, 1.0));
  ln.shift = params.add(name + ".shift", Tensor::vector(dim, 0.0));
  return ln;
}

namespace {
inline double normalize_row(const double* x, double* xhat, std::size_t n, double eps) {
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) xhat[j] = (x[j] - mean) * inv;
  return inv;
}
}  // namespace

Tensor LayerNorm::forward(const Parameters& params, const Tensor& x, Cache& cache) const {
  if (x.cols() != dim) throw ContractError("layer_norm: width mismatch");
  const Tensor& g = params[gain];
  const Tensor& b = params[shift];
  const std::size_t rows = x.rows();
  cache.normalized = Tensor::matrix(rows, dim);
  cache.inv_std.assign(rows, 0.0);
  Tensor y = Tensor::matrix(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double* xh = cache.normalized.data() + r * dim;
    cache.inv_std[r] = normalize_row(x.data() + r * dim, xh, dim, eps);
    for (std::size_t j = 0; j < dim; ++j) y(r, j) = g[j] * xh[j] + b[j];
  }
  return y;
}

void LayerNorm::forward_row(const Parameters& params, const double* x, double* y) const {
  const Tensor& g = params[gain];
  const Tensor& b = params[shift];
  std::vector<double> xh(dim);
  normalize_row(x, xh.data(), dim, eps);
  for (std::size_t j = 0; j < dim; ++j) y[j] = g[j] * xh[j] + b[j];
}

Tensor LayerNorm::backward(const Parameters& params, const Cache& cache, const Tensor& dy,
                           Gradients& grads) const {
  const Tensor& g = params[gain];
  Tensor& dg = grads[gain];
  Tensor& db = grads[shift];
  const std::size_t rows = dy.rows();
  Tensor dx = Tensor::matrix(rows, dim);
  std::vector<double> dxh(dim);
  const double n = static_cast<double>(dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xh = cache.normalized.data() + r * dim;
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = dy(r, j);
      dg[j] += d * xh[j];
      db[j] += d;
      dxh[j] = d * g[j];
      mean_d += dxh[j];
      mean_dx += dxh[j] * xh[j];
    }
    mean_d /= n;
    mean_dx /= n;
    for (std::size_t j = 0; j < dim; ++j)
      dx(r, j) = cache.inv_std[r] * (dxh[j] - mean_d - xh[j] * mean_dx);
  }
  return dx;
}

// ---------------------------------------------------- CausalSelfAttention

CausalSelfAttention CausalSelfAttention::create(Parameters& params, const std::string& name,
                                                std::size_t dim, std::size_t heads, Rng& rng,
                                                double init_std, std::size_t window) {
  if (heads == 0 || dim % heads != 0)
    throw ConfigError("attention: dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  CausalSelfAttention a;
  a.dim = dim;
  a.heads = heads;
  a.window = window;
  a.query = Linear::create(params, name + ".query", dim, dim, rng, init_std);
  a.key = Linear::create(params, name + ".key", dim, dim, rng, init_std, false);
  a.value = Linear::create(params, name + ".value", dim, dim, rng, init_std);
  a.proj = Linear::create(params, name + ".proj", dim, dim, rng, init_std);
  return a;
}

Tensor CausalSelfAttention::forward(const Parameters& params, const Tensor& x, Cache& c,
                                    const Dropout& attn_dropout) const {
  if (heads == 0 || dim % heads != 0) throw ConfigError("attention: dim not divisible by heads");
  if (x.rows() == 0) throw ContractError("attention: empty sequence");
  const std::size_t L = x.rows();
  const std::size_t dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.x = x;
  c.q = query.forward(params, x);
  c.k = key.forward(params, x);
  c.v = value.forward(params, x);
  c.probs = Tensor::matrix(heads * L, L);
  c.context = Tensor::matrix(L, dim);

  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < L; ++i) {
      double* p = c.probs.data() + (h * L + i) * L;
      const double* qi = c.q.data() + i * dim + off;
      const std::size_t j0 = first_key(i);
      double mx = -INFINITY;
      for (std::size_t j = j0; j <= i; ++j) {
        const double* kj = c.k.data() + j * dim + off;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
        p[j] = s * scale;
        mx = std::max(mx, p[j]);
      }
      double sum = 0.0;
      for (std::size_t j = j0; j <= i; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
      }
      for (std::size_t j = j0; j <= i; ++j) p[j] /= sum;
    }
  }

  if (attn_dropout.active()) {
    c.mask = attn_dropout.sample_mask(heads * L, L);
    c.dropped = c.probs;
    for (std::size_t i = 0; i < c.dropped.size(); ++i) c.dropped[i] *= c.mask[i];
  } else {
    c.mask = Tensor();
    c.dropped = c.probs;
  }

  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < L; ++i) {
      const double* p = c.dropped.data() + (h * L + i) * L;
      double* ctx = c.context.data() + i * dim + off;
      for (std::size_t j = first_key(i); j <= i; ++j) {
        const double* vj = c.v.data() + j * dim + off;
        for (std::size_t d = 0; d < dh; ++d) ctx[d] += p[j] * vj[d];
      }
    }
  }
  return proj.forward(params, c.context);
}

Tensor CausalSelfAttention::backward(const Parameters& params, const Cache& c, const Tensor& dy,
                                     Gradients& grads) const {
  const std::size_t L = c.x.rows();
  const std::size_t dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor dctx = proj.backward(params, c.context, dy, grads);
  Tensor dq = Tensor::matrix(L, dim);
  Tensor dk = Tensor::matrix(L, dim);
  Tensor dv = Tensor::matrix(L, dim);
  std::vector<double> dp(L);

  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t j0 = first_key(i);
      const double* p = c.probs.data() + (h * L + i) * L;
      const double* pd = c.dropped.data() + (h * L + i) * L;
      const double* m = c.mask.empty() ? nullptr : c.mask.data() + (h * L + i) * L;
      const double* gi = dctx.data() + i * dim + off;
      // d(dropped prob) and dv
      for (std::size_t j = j0; j <= i; ++j) {
        const double* vj = c.v.data() + j * dim + off;
        double* dvj = dv.data() + j * dim + off;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) {
          s += gi[d] * vj[d];
          dvj[d] += pd[j] * gi[d];
        }
        dp[j] = m ? s * m[j] : s;
      }
      // softmax backward
      double dot = 0.0;
      for (std::size_t j = j0; j <= i; ++j) dot += p[j] * dp[j];
      const double* qi = c.q.data() + i * dim + off;
      double* dqi = dq.data() + i * dim + off;
      for (std::size_t j = j0; j <= i; ++j) {
        const double ds = p[j] * (dp[j] - dot) * scale;
        const double* kj = c.k.data() + j * dim + off;
        double* dkj = dk.data() + j * dim + off;
        for (std::size_t d = 0; d < dh; ++d) {
          dqi[d] += ds * kj[d];
          dkj[d] += ds * qi[d];
        }
      }
    }
  }

  Tensor dx = query.backward(params, c.x, dq, grads);
  Tensor dxk = key.backward(params, c.x, dk, grads);
  Tensor dxv = value.backward(params, c.x, dv, grads);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxk[i] + dxv[i];
  return dx;
}

void CausalSelfAttention::step(const Parameters& params, const double* x, KV& kv,
                               double* y) const {
  const std::size_t dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> q(dim), ctx(dim, 0.0);
  query.forward_row(params, x, q.data());
  kv.keys.resize((kv.length + 1) * dim);
  kv.values.resize((kv.length + 1) * dim);
  key.forward_row(params, x, kv.keys.data() + kv.length * dim);
  value.forward_row(params, x, kv.values.data() + kv.length * dim);
  const std::size_t i = kv.length;
  ++kv.length;
  const std::size_t j0 = first_key(i);
  std::vector<double> p(i + 1);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    double mx = -INFINITY;
    for (std::size_t j = j0; j <= i; ++j) {
      const double* kj = kv.keys.data() + j * dim + off;
      double s = 0.0;
      for (std::size_t d = 0; d < dh; ++d) s += q[off + d] * kj[d];
      p[j] = s * scale;
      mx = std::max(mx, p[j]);
    }
    double sum = 0.0;
    for (std::size_t j = j0; j <= i; ++j) {
      p[j] = std::exp(p[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = j0; j <= i; ++j) p[j] /= sum;
    for (std::size_t j = j0; j <= i; ++j) {
      const double* vj = kv.values.data() + j * dim + off;
      for (std::size_t d = 0; d < dh; ++d) ctx[off + d] += p[j] * vj[d];
    }
  }
  proj.forward_row(params, ctx.data(), y);
}

// ----------------------------------------------------------- FeedForward

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double t = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

FeedForward FeedForward::create(Parameters& params, const std::string& name, std::size_t dim,
                                std::size_t hidden, Rng& rng, double init_std) {
  FeedForward f;
  f.fc1 = Linear::create(params, name + ".fc1", dim, hidden, rng, init_std);
  f.fc2 = Linear::create(params, name + ".fc2", hidden, dim, rng, init_std);
  return f;
}

Tensor FeedForward::forward(const Parameters& params, const Tensor& x, Cache& c) const {
  c.x = x;
  c.pre = fc1.forward(params, x);
  c.act = c.pre;
  for (auto& v : c.act.storage()) v = gelu(v);
  return fc2.forward(params, c.act);
}

Tensor FeedForward::backward(const Parameters& params, const Cache& c, const Tensor& dy,
                             Gradients& grads) const {
  Tensor da = fc2.backward(params, c.act, dy, grads);
  for (std::size_t i = 0; i < da.size(); ++i) da[i] *= gelu_grad(c.pre[i]);
  return fc1.backward(params, c.x, da, grads);
}

void FeedForward::forward_row(const Parameters& params, const double* x, double* y) const {
  std::vector<double> h(fc1.out);
  fc1.forward_row(params, x, h.data());
  for (auto& v : h) v = gelu(v);
  fc2.forward_row(params, h.data(), y);
}

// ------------------------------------------------------ TransformerBlock

TransformerBlock TransformerBlock::create(Parameters& params, const std::string& name,
                                          std::size_t dim, std::size_t heads,
                                          std::size_t ffn_hidden, Rng& rng, double init_std,
                                          std::size_t window) {
  TransformerBlock b;
  b.attn = CausalSelfAttention::create(params, name + ".attn", dim, heads, rng, init_std, window);
  b.ln1 = LayerNorm::create(params, name + ".ln1", dim);
  b.ffn = FeedForward::create(params, name + ".ffn", dim, ffn_hidden, rng, init_std);
  b.ln2 = LayerNorm::create(params, name + ".ln2", dim);
  return b;
}

Tensor TransformerBlock::forward(const Parameters& params, const Tensor& x, Cache& c,
                                 const DropoutSet& dropout) const {
  Tensor a = attn.forward(params, x, c.attn, dropout.attention);
  if (dropout.residual.active()) {
    c.attn_mask = dropout.residual.sample_mask(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= c.attn_mask[i];
  } else {
    c.attn_mask = Tensor();
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += x[i];
  Tensor h = ln1.forward(params, a, c.ln1);
  Tensor f = ffn.forward(params, h, c.ffn);
  if (dropout.residual.active()) {
    c.ffn_mask = dropout.residual.sample_mask(f.rows(), f.cols());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= c.ffn_mask[i];
  } else {
    c.ffn_mask = Tensor();
  }
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += h[i];
  return ln2.forward(params, f, c.ln2);
}

Tensor TransformerBlock::backward(const Parameters& params, const Cache& c, const Tensor& dy,
                                  Gradients& grads) const {
  Tensor dr2 = ln2.backward(params, c.ln2, dy, grads);
  Tensor df = dr2;
  if (!c.ffn_mask.empty())
    for (std::size_t i = 0; i < df.size(); ++i) df[i] *= c.ffn_mask[i];
  Tensor dh = ffn.backward(params, c.ffn, df, grads);
  for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dr2[i];
  Tensor dr1 = ln1.backward(params, c.ln1, dh, grads);
  Tensor da = dr1;
  if (!c.attn_mask.empty())
    for (std::size_t i = 0; i < da.size(); ++i) da[i] *= c.attn_mask[i];
  Tensor dx = attn.backward(params, c.attn, da, grads);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dr1[i];
  return dx;
}

void TransformerBlock::step(const Parameters& params, const double* x,
                            CausalSelfAttention::KV& kv, double* y) const {
  const std::size_t d = attn.dim;
  std::vector<double> a(d), h(d), f(d);
  attn.step(params, x, kv, a.data());
  for (std::size_t i = 0; i < d; ++i) a[i] += x[i];
  ln1.forward_row(params, a.data(), h.data());
  ffn.forward_row(params, h.data(), f.data());
  for (std::size_t i = 0; i < d; ++i) f[i] += h[i];
  ln2.forward_row(params, f.data(), y);
}

}  // namespace dancerl
