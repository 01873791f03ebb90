#include "poseforge/nnet.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace poseforge::nn {

namespace {

struct ConvGeom {
  int cin, cout, k, stride, pad, in, out;
  constexpr int pooled() const { return out / 2; }
};

constexpr std::array<ConvGeom, 3> kConv = {{
    {1, 8, 5, 2, 2, 64, 32},
    {8, 16, 3, 1, 1, 16, 16},
    {16, 32, 3, 1, 1, 8, 8},
}};

constexpr std::array<std::size_t, 3> kConvW = {kConv1W, kConv2W, kConv3W};
constexpr std::array<std::size_t, 3> kConvB = {kConv1B, kConv2B, kConv3B};

static_assert(kConv[2].cout * kConv[2].pooled() * kConv[2].pooled() == kEmbedDim);

std::array<ParamSpec, kParamCount> make_specs() {
  using U = std::uint32_t;
  std::array<ParamSpec, kParamCount> s;
  auto conv = [&](std::size_t w, std::size_t b, const ConvGeom& g, std::string_view wn, std::string_view bn) {
    const auto fan = static_cast<Eigen::Index>(g.cin * g.k * g.k);
    s[w] = {wn, {U(g.cout), U(g.cin), U(g.k), U(g.k)}, g.cout, fan, LayerGroup::Conv, true};
    s[b] = {bn, {U(g.cout)}, 1, g.cout, LayerGroup::Conv, true};
  };
  conv(kConv1W, kConv1B, kConv[0], "conv1.weight", "conv1.bias");
  conv(kConv2W, kConv2B, kConv[1], "conv2.weight", "conv2.bias");
  conv(kConv3W, kConv3B, kConv[2], "conv3.weight", "conv3.bias");

  auto dense = [&](std::size_t w, std::size_t b, int out, int in, LayerGroup g, std::string_view wn,
                   std::string_view bn) {
    s[w] = {wn, {U(out), U(in)}, out, in, g, true};
    s[b] = {bn, {U(out)}, 1, out, g, true};
  };
  auto norm = [&](std::size_t first, int n, LayerGroup g, std::string_view gamma, std::string_view beta,
                  std::string_view mean, std::string_view var) {
    s[first] = {gamma, {U(n)}, 1, n, g, true};
    s[first + 1] = {beta, {U(n)}, 1, n, g, true};
    s[first + 2] = {mean, {U(n)}, 1, n, g, false};
    s[first + 3] = {var, {U(n)}, 1, n, g, false};
  };
  const auto T = LayerGroup::TemporalHead;
  const auto S = LayerGroup::SpatialHead;
  dense(kT1W, kT1B, kTemporalHidden1, 2 * kEmbedDim, T, "temporal.fc1.weight", "temporal.fc1.bias");
  norm(kT1Gamma, kTemporalHidden1, T, "temporal.bn1.scale", "temporal.bn1.shift", "temporal.bn1.running_mean",
       "temporal.bn1.running_var");
  dense(kT2W, kT2B, kTemporalHidden2, kTemporalHidden1, T, "temporal.fc2.weight", "temporal.fc2.bias");
  norm(kT2Gamma, kTemporalHidden2, T, "temporal.bn2.scale", "temporal.bn2.shift", "temporal.bn2.running_mean",
       "temporal.bn2.running_var");
  dense(kT3W, kT3B, 1, kTemporalHidden2, T, "temporal.fc3.weight", "temporal.fc3.bias");
  dense(kS1W, kS1B, kSpatialHidden, kEmbedDim, S, "spatial.fc1.weight", "spatial.fc1.bias");
  norm(kS1Gamma, kSpatialHidden, S, "spatial.bn1.scale", "spatial.bn1.shift", "spatial.bn1.running_mean",
       "spatial.bn1.running_var");
  dense(kS2W, kS2B, 1, kSpatialHidden, S, "spatial.fc2.weight", "spatial.fc2.bias");
  return s;
}

template <typename Scalar>
void im2col(const Scalar* in, int batch, const ConvGeom& g, Mat<Scalar>& cols) {
  const int hw_in = g.in * g.in;
  const int hw_out = g.out * g.out;
  cols.resize(static_cast<Eigen::Index>(g.cin) * g.k * g.k, static_cast<Eigen::Index>(batch) * hw_out);
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        Scalar* dst = cols.row((c * g.k + ky) * g.k + kx).data();
        for (int b = 0; b < batch; ++b) {
          const Scalar* src = in + (static_cast<std::ptrdiff_t>(c) * batch + b) * hw_in;
          for (int oy = 0; oy < g.out; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            Scalar* row = dst + static_cast<std::ptrdiff_t>(b) * hw_out + oy * g.out;
            if (iy < 0 || iy >= g.in) {
              std::fill(row, row + g.out, Scalar(0));
              continue;
            }
            for (int ox = 0; ox < g.out; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              row[ox] = (ix >= 0 && ix < g.in) ? src[iy * g.in + ix] : Scalar(0);
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Mat<Scalar>& cols, int batch, const ConvGeom& g, Mat<Scalar>& out) {
  const int hw_in = g.in * g.in;
  const int hw_out = g.out * g.out;
  out = Mat<Scalar>::Zero(g.cin, static_cast<Eigen::Index>(batch) * hw_in);
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const Scalar* srcrow = cols.row((c * g.k + ky) * g.k + kx).data();
        for (int b = 0; b < batch; ++b) {
          Scalar* dst = out.data() + (static_cast<std::ptrdiff_t>(c) * batch + b) * hw_in;
          for (int oy = 0; oy < g.out; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in) continue;
            const Scalar* src = srcrow + static_cast<std::ptrdiff_t>(b) * hw_out + oy * g.out;
            for (int ox = 0; ox < g.out; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.in) dst[iy * g.in + ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

// 2x2/2 max pooling over a channels x (batch*h*w) map; argmax holds column indices.
template <typename Scalar>
Mat<Scalar> max_pool(const Mat<Scalar>& act, int batch, int size, std::vector<int>& argmax) {
  const int half = size / 2;
  const int hw_in = size * size;
  const int hw_out = half * half;
  Mat<Scalar> out(act.rows(), static_cast<Eigen::Index>(batch) * hw_out);
  argmax.resize(static_cast<std::size_t>(out.size()));
  for (Eigen::Index c = 0; c < act.rows(); ++c) {
    const Scalar* src = act.row(c).data();
    Scalar* dst = out.row(c).data();
    int* arg = argmax.data() + c * out.cols();
    for (int b = 0; b < batch; ++b) {
      for (int oy = 0; oy < half; ++oy) {
        for (int ox = 0; ox < half; ++ox) {
          const int base = b * hw_in + 2 * oy * size + 2 * ox;
          int best = base;
          for (int idx : {base + 1, base + size, base + size + 1}) {
            if (src[idx] > src[best]) best = idx;
          }
          const int o = b * hw_out + oy * half + ox;
          dst[o] = src[best];
          arg[o] = best;
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> unpool(const Mat<Scalar>& d_out, const std::vector<int>& argmax, Eigen::Index in_cols) {
  Mat<Scalar> d_in = Mat<Scalar>::Zero(d_out.rows(), in_cols);
  for (Eigen::Index c = 0; c < d_out.rows(); ++c) {
    const int* arg = argmax.data() + c * d_out.cols();
    for (Eigen::Index o = 0; o < d_out.cols(); ++o) d_in(c, arg[o]) += d_out(c, o);
  }
  return d_in;
}

template <typename Scalar>
Mat<Scalar> activate(const Mat<Scalar>& pre, Scalar negative_slope) {
  return (pre.array() > Scalar(0)).select(pre, negative_slope * pre);
}

template <typename Scalar>
Scalar layer_slope(int layer, const ArchConfig& arch) {
  return layer == 2 ? static_cast<Scalar>(arch.leaky_slope) : Scalar(0);
}

// FC -> BN -> ReLU.
template <typename Scalar>
Mat<Scalar> hidden_forward(const ConvNetParams<Scalar>& p, std::size_t w, const Mat<Scalar>& x, Mode mode,
                           const ArchConfig& arch, HiddenCache<Scalar>& cache) {
  const std::size_t b = w + 1, gamma = w + 2, beta = w + 3, mean = w + 4, var = w + 5;
  Mat<Scalar> z = x * p[w].transpose();
  z.rowwise() += p[b].row(0);
  const auto eps = static_cast<Scalar>(arch.bn_epsilon);
  const auto n = static_cast<Scalar>(z.rows());
  if (mode == Mode::Train) {
    cache.batch_mean = z.colwise().sum() / n;
    Mat<Scalar> centered = z.rowwise() - cache.batch_mean;
    cache.batch_var = centered.array().square().colwise().sum() / n;
    cache.inv_std = (cache.batch_var.array() + eps).rsqrt();
    cache.xhat = centered.array().rowwise() * cache.inv_std.array();
  } else {
    cache.inv_std = (p[var].row(0).array() + eps).rsqrt();
    cache.xhat = (z.rowwise() - p[mean].row(0)).array().rowwise() * cache.inv_std.array();
  }
  cache.bn_out = cache.xhat.array().rowwise() * p[gamma].row(0).array();
  cache.bn_out.rowwise() += p[beta].row(0);
  cache.input = x;
  return cache.bn_out.cwiseMax(Scalar(0));
}

template <typename Scalar>
Mat<Scalar> hidden_backward(const ConvNetParams<Scalar>& p, std::size_t w, const HiddenCache<Scalar>& cache,
                            const Mat<Scalar>& d_out, Mode mode, ConvNetParams<Scalar>& grads) {
  const std::size_t b = w + 1, gamma = w + 2, beta = w + 3;
  const Mat<Scalar> d_bn = (cache.bn_out.array() > Scalar(0)).select(d_out, Scalar(0));
  grads[gamma].row(0) += (d_bn.array() * cache.xhat.array()).colwise().sum().matrix();
  grads[beta].row(0) += d_bn.colwise().sum();
  const Mat<Scalar> d_xhat = d_bn.array().rowwise() * p[gamma].row(0).array();
  Mat<Scalar> d_z;
  if (mode == Mode::Train) {
    const auto n = static_cast<Scalar>(d_xhat.rows());
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_d = d_xhat.colwise().sum();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_dx =
        (d_xhat.array() * cache.xhat.array()).colwise().sum().matrix();
    Mat<Scalar> t = n * d_xhat;
    t.rowwise() -= sum_d;
    t -= (cache.xhat.array().rowwise() * sum_dx.array()).matrix();
    d_z = (t.array().rowwise() * (cache.inv_std.array() / n)).matrix();
  } else {
    d_z = d_xhat.array().rowwise() * cache.inv_std.array();
  }
  grads[w] += d_z.transpose() * cache.input;
  grads[b].row(0) += d_z.colwise().sum();
  return d_z * p[w];
}

template <typename Scalar>
Vec<Scalar> output_forward(const ConvNetParams<Scalar>& p, std::size_t w, const Mat<Scalar>& x) {
  Vec<Scalar> logits = x * p[w].row(0).transpose();
  logits.array() += p[w + 1](0, 0);
  return logits;
}

template <typename Scalar>
Mat<Scalar> output_backward(const ConvNetParams<Scalar>& p, std::size_t w, const Mat<Scalar>& x,
                            const Vec<Scalar>& d_logits, ConvNetParams<Scalar>& grads) {
  grads[w].row(0) += (x.transpose() * d_logits).transpose();
  grads[w + 1](0, 0) += d_logits.sum();
  return d_logits * p[w].row(0);
}

template <typename Scalar>
void check_images(const Mat<Scalar>& images, const char* what) {
  if (images.cols() != kInputPixels) {
    throw Error(std::string(what) + ": expected rows of " + std::to_string(kInputPixels) + " pixels, got " +
                std::to_string(images.cols()));
  }
}

}  // namespace

const std::array<ParamSpec, kParamCount>& param_specs() {
  static const std::array<ParamSpec, kParamCount> specs = make_specs();
  return specs;
}

template <typename Scalar>
ConvNetParams<Scalar> ConvNetParams<Scalar>::zeros() {
  ConvNetParams out;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    out.tensors[i] = Mat<Scalar>::Zero(param_specs()[i].rows, param_specs()[i].cols);
  }
  return out;
}

template <typename Scalar>
ConvNetParams<Scalar> init_params(std::uint64_t seed) {
  auto params = ConvNetParams<Scalar>::zeros();
  Rng rng = make_rng(seed, "init");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i : {kConv1W, kConv2W, kConv3W, kT1W, kT2W, kT3W, kS1W, kS2W}) {
    const double std_dev = std::sqrt(2.0 / static_cast<double>(param_specs()[i].cols));
    for (Eigen::Index k = 0; k < params[i].size(); ++k) {
      params[i].data()[k] = static_cast<Scalar>(std_dev * normal(rng));
    }
  }
  for (std::size_t i : {kT1Gamma, kT1Var, kT2Gamma, kT2Var, kS1Gamma, kS1Var}) params[i].setOnes();
  return params;
}

template <typename Scalar>
Mat<Scalar> embed_batch(const ConvNetParams<Scalar>& params, const Mat<Scalar>& images, const ArchConfig& arch,
                        ConvCache<Scalar>* cache) {
  check_images(images, "embed_batch");
  const int batch = static_cast<int>(images.rows());
  // Row-major batch x pixels has the same layout as a 1 x (batch*pixels) channel map.
  Mat<Scalar> act = Eigen::Map<const Mat<Scalar>>(images.data(), 1, images.size());
  Mat<Scalar> cols;
  for (int l = 0; l < 3; ++l) {
    const ConvGeom& g = kConv[l];
    im2col(act.data(), batch, g, cols);
    Mat<Scalar> pre = params[kConvW[l]] * cols;
    pre.colwise() += params[kConvB[l]].row(0).transpose();
    std::vector<int> argmax;
    act = max_pool(activate(pre, layer_slope<Scalar>(l, arch)), batch, g.out, argmax);
    if (cache) {
      cache->cols[l] = std::move(cols);
      cache->pre[l] = std::move(pre);
      cache->argmax[l] = std::move(argmax);
    }
  }
  if (cache) cache->batch = batch;
  // act: channels x (batch * 16) -> batch x (channels * 16)
  const int spatial = kConv[2].pooled() * kConv[2].pooled();
  Mat<Scalar> emb(batch, kEmbedDim);
  for (int c = 0; c < kConv[2].cout; ++c) {
    for (int b = 0; b < batch; ++b) {
      for (int s = 0; s < spatial; ++s) emb(b, c * spatial + s) = act(c, b * spatial + s);
    }
  }
  return emb;
}

template <typename Scalar>
void conv_backward(const ConvNetParams<Scalar>& params, const ConvCache<Scalar>& cache, const Mat<Scalar>& d_embed,
                   const ArchConfig& arch, ConvNetParams<Scalar>& grads) {
  const int batch = cache.batch;
  if (batch == 0 || cache.pre[0].size() == 0) throw Error("conv_backward: missing train-mode cache");
  if (d_embed.rows() != batch || d_embed.cols() != kEmbedDim) throw Error("conv_backward: gradient shape mismatch");
  const int spatial = kConv[2].pooled() * kConv[2].pooled();
  Mat<Scalar> d_act(kConv[2].cout, static_cast<Eigen::Index>(batch) * spatial);
  for (int c = 0; c < kConv[2].cout; ++c) {
    for (int b = 0; b < batch; ++b) {
      for (int s = 0; s < spatial; ++s) d_act(c, b * spatial + s) = d_embed(b, c * spatial + s);
    }
  }
  for (int l = 2; l >= 0; --l) {
    const Mat<Scalar>& pre = cache.pre[l];
    Mat<Scalar> d_pre = unpool(d_act, cache.argmax[l], pre.cols());
    const Scalar slope = layer_slope<Scalar>(l, arch);
    d_pre = (pre.array() > Scalar(0)).select(d_pre, slope * d_pre);
    grads[kConvW[l]].noalias() += d_pre * cache.cols[l].transpose();
    grads[kConvB[l]].row(0) += d_pre.rowwise().sum().transpose();
    if (l > 0) {
      const Mat<Scalar> d_cols = params[kConvW[l]].transpose() * d_pre;
      col2im(d_cols, batch, kConv[l], d_act);
    }
  }
}

template <typename Scalar>
Vec<Scalar> temporal_logits(const ConvNetParams<Scalar>& params, const Mat<Scalar>& emb_a, const Mat<Scalar>& emb_b,
                            Mode mode, const ArchConfig& arch, HeadCache<Scalar>* cache) {
  if (emb_a.rows() != emb_b.rows() || emb_a.cols() != kEmbedDim || emb_b.cols() != kEmbedDim) {
    throw Error("temporal head: embedding shape mismatch");
  }
  HeadCache<Scalar> local;
  HeadCache<Scalar>& c = cache ? *cache : local;
  c.mode = mode;
  c.hidden.resize(2);
  Mat<Scalar> x(emb_a.rows(), 2 * kEmbedDim);
  x << emb_a, emb_b;
  x = hidden_forward(params, kT1W, x, mode, arch, c.hidden[0]);
  x = hidden_forward(params, kT2W, x, mode, arch, c.hidden[1]);
  c.logits = output_forward(params, kT3W, x);
  c.last_input = std::move(x);
  return c.logits;
}

template <typename Scalar>
Vec<Scalar> spatial_logits(const ConvNetParams<Scalar>& params, const Mat<Scalar>& emb, Mode mode,
                           const ArchConfig& arch, HeadCache<Scalar>* cache) {
  if (emb.cols() != kEmbedDim) throw Error("spatial head: embedding shape mismatch");
  HeadCache<Scalar> local;
  HeadCache<Scalar>& c = cache ? *cache : local;
  c.mode = mode;
  c.hidden.resize(1);
  Mat<Scalar> x = hidden_forward(params, kS1W, emb, mode, arch, c.hidden[0]);
  c.logits = output_forward(params, kS2W, x);
  c.last_input = std::move(x);
  return c.logits;
}

template <typename Scalar>
void temporal_backward(const ConvNetParams<Scalar>& params, const HeadCache<Scalar>& cache,
                       const Vec<Scalar>& d_logits, ConvNetParams<Scalar>& grads, Mat<Scalar>& d_emb_a,
                       Mat<Scalar>& d_emb_b) {
  if (cache.hidden.size() != 2 || d_logits.size() != cache.logits.size()) {
    throw Error("temporal_backward: stale or missing cache");
  }
  Mat<Scalar> d = output_backward(params, kT3W, cache.last_input, d_logits, grads);
  d = hidden_backward(params, kT2W, cache.hidden[1], d, cache.mode, grads);
  d = hidden_backward(params, kT1W, cache.hidden[0], d, cache.mode, grads);
  d_emb_a = d.leftCols(kEmbedDim);
  d_emb_b = d.rightCols(kEmbedDim);
}

template <typename Scalar>
void spatial_backward(const ConvNetParams<Scalar>& params, const HeadCache<Scalar>& cache,
                      const Vec<Scalar>& d_logits, ConvNetParams<Scalar>& grads, Mat<Scalar>& d_emb) {
  if (cache.hidden.size() != 1 || d_logits.size() != cache.logits.size()) {
    throw Error("spatial_backward: stale or missing cache");
  }
  Mat<Scalar> d = output_backward(params, kS2W, cache.last_input, d_logits, grads);
  d_emb = hidden_backward(params, kS1W, cache.hidden[0], d, cache.mode, grads);
}

template <typename Scalar>
void update_running_stats(ConvNetParams<Scalar>& params, const HeadCache<Scalar>& cache, bool temporal,
                          double momentum) {
  if (cache.mode != Mode::Train) return;
  const std::vector<std::size_t> firsts =
      temporal ? std::vector<std::size_t>{kT1W, kT2W} : std::vector<std::size_t>{kS1W};
  const auto m = static_cast<Scalar>(momentum);
  for (std::size_t h = 0; h < firsts.size() && h < cache.hidden.size(); ++h) {
    const std::size_t mean = firsts[h] + 4, var = firsts[h] + 5;
    params[mean].row(0) = m * params[mean].row(0) + (Scalar(1) - m) * cache.hidden[h].batch_mean;
    params[var].row(0) = m * params[var].row(0) + (Scalar(1) - m) * cache.hidden[h].batch_var;
  }
}

template <typename Scalar>
Vec<Scalar> sigmoid(const Vec<Scalar>& logits) {
  return (Scalar(1) + (-logits.array()).exp()).inverse().matrix();
}

template <typename Scalar>
Scalar bce_loss(const Vec<Scalar>& probabilities, const Vec<Scalar>& labels) {
  if (probabilities.size() != labels.size()) throw Error("bce_loss: size mismatch");
  if (probabilities.size() == 0) return Scalar(0);
  const auto lo = static_cast<Scalar>(kProbabilityClamp);
  const Scalar hi = Scalar(1) - lo;
  Scalar total = 0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const Scalar p = std::clamp(probabilities[i], lo, hi);
    total -= labels[i] * std::log(p) + (Scalar(1) - labels[i]) * std::log(Scalar(1) - p);
  }
  return total / static_cast<Scalar>(probabilities.size());
}

template <typename Scalar>
Vec<Scalar> bce_logit_gradient(const Vec<Scalar>& logits, const Vec<Scalar>& labels) {
  const Vec<Scalar> p = sigmoid(logits);
  const auto lo = static_cast<Scalar>(kProbabilityClamp);
  const auto n = static_cast<Scalar>(logits.size());
  Vec<Scalar> d(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    d[i] = (p[i] < lo || p[i] > Scalar(1) - lo) ? Scalar(0) : (p[i] - labels[i]) / n;
  }
  return d;
}

template <typename Scalar>
EmbedResult<Scalar> forward_embed(const ConvNetParams<Scalar>& params, const Mat<Scalar>& image, Mode mode,
                                  const ArchConfig& arch) {
  if (image.rows() * image.cols() != kInputPixels) throw Error("forward_embed: expected a 64x64 image");
  const Mat<Scalar> row = Eigen::Map<const Mat<Scalar>>(image.data(), 1, kInputPixels);
  EmbedResult<Scalar> out;
  const Mat<Scalar> emb = embed_batch<Scalar>(params, row, arch, mode == Mode::Train ? &out.cache : nullptr);
  out.embedding = emb.row(0).transpose();
  return out;
}

template <typename Scalar>
Vec<Scalar> forward_temporal(const ConvNetParams<Scalar>& params, const Mat<Scalar>& images_a,
                             const Mat<Scalar>& images_b, Mode mode, const ArchConfig& arch) {
  if (images_a.rows() != images_b.rows()) throw Error("forward_temporal: pair count mismatch");
  const Mat<Scalar> ea = embed_batch<Scalar>(params, images_a, arch, nullptr);
  const Mat<Scalar> eb = embed_batch<Scalar>(params, images_b, arch, nullptr);
  return sigmoid(temporal_logits<Scalar>(params, ea, eb, mode, arch, nullptr));
}

template <typename Scalar>
Vec<Scalar> forward_spatial(const ConvNetParams<Scalar>& params, const Mat<Scalar>& images, Mode mode,
                            const ArchConfig& arch) {
  const Mat<Scalar> e = embed_batch<Scalar>(params, images, arch, nullptr);
  return sigmoid(spatial_logits<Scalar>(params, e, mode, arch, nullptr));
}

template <typename Scalar>
StepOutput<Scalar> forward_backward(const ConvNetParams<Scalar>& params, const JointBatch<Scalar>& batch,
                                    Scalar spatial_weight, const ArchConfig& arch) {
  const Eigen::Index nt = batch.anchors.rows();
  const Eigen::Index ns = batch.spatial.rows();
  if (batch.candidates.rows() != nt || batch.temporal_labels.size() != nt || batch.spatial_labels.size() != ns) {
    throw Error("forward_backward: batch shape mismatch");
  }
  if (nt + ns == 0) throw Error("forward_backward: empty batch");

  // One conv pass over [anchors; candidates; spatial] shares the conv weights across all streams.
  Mat<Scalar> images(2 * nt + ns, kInputPixels);
  if (nt > 0) {
    images.topRows(nt) = batch.anchors;
    images.middleRows(nt, nt) = batch.candidates;
  }
  if (ns > 0) images.bottomRows(ns) = batch.spatial;
  ConvCache<Scalar> conv_cache;
  const Mat<Scalar> emb = embed_batch<Scalar>(params, images, arch, &conv_cache);

  StepOutput<Scalar> out;
  out.grads = ConvNetParams<Scalar>::zeros();
  Mat<Scalar> d_emb = Mat<Scalar>::Zero(emb.rows(), emb.cols());
  if (nt > 0) {
    const Vec<Scalar> logits = temporal_logits<Scalar>(params, emb.topRows(nt), emb.middleRows(nt, nt), Mode::Train,
                                                       arch, &out.temporal_cache);
    out.loss_temporal = bce_loss<Scalar>(sigmoid(logits), batch.temporal_labels);
    Mat<Scalar> da, db;
    temporal_backward<Scalar>(params, out.temporal_cache, bce_logit_gradient(logits, batch.temporal_labels),
                              out.grads, da, db);
    d_emb.topRows(nt) = da;
    d_emb.middleRows(nt, nt) = db;
  }
  if (ns > 0) {
    const Vec<Scalar> logits =
        spatial_logits<Scalar>(params, emb.bottomRows(ns), Mode::Train, arch, &out.spatial_cache);
    out.loss_spatial = bce_loss<Scalar>(sigmoid(logits), batch.spatial_labels);
    if (spatial_weight != Scalar(0)) {
      Vec<Scalar> d_logits = bce_logit_gradient(logits, batch.spatial_labels) * spatial_weight;
      // The spatial head parameters see the weighted gradient as well.
      Mat<Scalar> ds;
      spatial_backward<Scalar>(params, out.spatial_cache, d_logits, out.grads, ds);
      d_emb.bottomRows(ns) = ds;
    }
  }
  out.total = joint_loss(out.loss_temporal, out.loss_spatial, spatial_weight);
  conv_backward(params, conv_cache, d_emb, arch, out.grads);
  return out;
}

template <typename Scalar>
Scalar joint_loss_value(const ConvNetParams<Scalar>& params, const JointBatch<Scalar>& batch, Scalar spatial_weight,
                        const ArchConfig& arch) {
  Scalar lt = 0, ls = 0;
  if (batch.anchors.rows() > 0) {
    const Mat<Scalar> ea = embed_batch<Scalar>(params, batch.anchors, arch, nullptr);
    const Mat<Scalar> eb = embed_batch<Scalar>(params, batch.candidates, arch, nullptr);
    lt = bce_loss<Scalar>(sigmoid(temporal_logits<Scalar>(params, ea, eb, Mode::Train, arch, nullptr)),
                          batch.temporal_labels);
  }
  if (batch.spatial.rows() > 0) {
    const Mat<Scalar> es = embed_batch<Scalar>(params, batch.spatial, arch, nullptr);
    ls = bce_loss<Scalar>(sigmoid(spatial_logits<Scalar>(params, es, Mode::Train, arch, nullptr)), batch.spatial_labels);
  }
  return joint_loss(lt, ls, spatial_weight);
}

#define POSEFORGE_INSTANTIATE(S)                                                                               \
  template struct ConvNetParams<S>;                                                                            \
  template ConvNetParams<S> init_params<S>(std::uint64_t);                                                     \
  template Mat<S> embed_batch<S>(const ConvNetParams<S>&, const Mat<S>&, const ArchConfig&, ConvCache<S>*);    \
  template void conv_backward<S>(const ConvNetParams<S>&, const ConvCache<S>&, const Mat<S>&, const ArchConfig&, \
                                 ConvNetParams<S>&);                                                           \
  template Vec<S> temporal_logits<S>(const ConvNetParams<S>&, const Mat<S>&, const Mat<S>&, Mode,              \
                                     const ArchConfig&, HeadCache<S>*);                                        \
  template Vec<S> spatial_logits<S>(const ConvNetParams<S>&, const Mat<S>&, Mode, const ArchConfig&,           \
                                    HeadCache<S>*);                                                            \
  template void temporal_backward<S>(const ConvNetParams<S>&, const HeadCache<S>&, const Vec<S>&,              \
                                     ConvNetParams<S>&, Mat<S>&, Mat<S>&);                                     \
  template void spatial_backward<S>(const ConvNetParams<S>&, const HeadCache<S>&, const Vec<S>&,               \
                                    ConvNetParams<S>&, Mat<S>&);                                               \
  template void update_running_stats<S>(ConvNetParams<S>&, const HeadCache<S>&, bool, double);                \
  template Vec<S> sigmoid<S>(const Vec<S>&);                                                                   \
  template S bce_loss<S>(const Vec<S>&, const Vec<S>&);                                                        \
  template Vec<S> bce_logit_gradient<S>(const Vec<S>&, const Vec<S>&);                                         \
  template EmbedResult<S> forward_embed<S>(const ConvNetParams<S>&, const Mat<S>&, Mode, const ArchConfig&);   \
  template Vec<S> forward_temporal<S>(const ConvNetParams<S>&, const Mat<S>&, const Mat<S>&, Mode,             \
                                      const ArchConfig&);                                                      \
  template Vec<S> forward_spatial<S>(const ConvNetParams<S>&, const Mat<S>&, Mode, const ArchConfig&);         \
  template StepOutput<S> forward_backward<S>(const ConvNetParams<S>&, const JointBatch<S>&, S, const ArchConfig&); \
  template S joint_loss_value<S>(const ConvNetParams<S>&, const JointBatch<S>&, S, const ArchConfig&);

POSEFORGE_INSTANTIATE(float)
POSEFORGE_INSTANTIATE(double)

#undef POSEFORGE_INSTANTIATE

}  // namespace poseforge::nn
