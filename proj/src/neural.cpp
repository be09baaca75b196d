#include "hybridsize/neural.hpp"

#include "hybridsize/mpc.hpp"
#include "hybridsize/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace hybridsize::neural {

using json = nlohmann::json;

void Architecture::validate() const {
  for (int v : {horizon, channels, blocks, cond_hidden, head_hidden1, head_hidden2, groups, kernel}) {
    if (v <= 0) throw std::invalid_argument("architecture sizes must be positive");
  }
  if (channels % groups != 0) {
    throw std::invalid_argument("channels must be divisible by groups");
  }
  if (kernel % 2 == 0) throw std::invalid_argument("kernel size must be odd");
}

std::size_t TensorSpec::size() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<TensorSpec> parameter_layout(const Architecture& a) {
  a.validate();
  const int C = a.channels;
  std::vector<TensorSpec> out;
  out.push_back({"input.weight", {C, 1, kSeriesChannels}});
  out.push_back({"input.bias", {C}});
  for (int j = 0; j < a.blocks; ++j) {
    const std::string p = "blocks." + std::to_string(j) + ".";
    out.push_back({p + "norm1.weight", {C}});
    out.push_back({p + "norm1.bias", {C}});
    out.push_back({p + "conv1.weight", {C, a.kernel, C}});
    out.push_back({p + "conv1.bias", {C}});
    out.push_back({p + "norm2.weight", {C}});
    out.push_back({p + "norm2.bias", {C}});
    out.push_back({p + "conv2.weight", {C, a.kernel, C}});
    out.push_back({p + "conv2.bias", {C}});
  }
  out.push_back({"cond.fc1.weight", {a.cond_hidden, kCondScalars}});
  out.push_back({"cond.fc1.bias", {a.cond_hidden}});
  out.push_back({"cond.fc2.weight", {2 * C * a.blocks, a.cond_hidden}});
  out.push_back({"cond.fc2.bias", {2 * C * a.blocks}});
  out.push_back({"head.fc1.weight", {a.head_hidden1, C}});
  out.push_back({"head.fc1.bias", {a.head_hidden1}});
  out.push_back({"head.fc2.weight", {a.head_hidden2, a.head_hidden1}});
  out.push_back({"head.fc2.bias", {a.head_hidden2}});
  out.push_back({"head.fc3.weight", {kOutputs, a.head_hidden2}});
  out.push_back({"head.fc3.bias", {kOutputs}});
  return out;
}

std::size_t parameter_count(const Architecture& arch) {
  std::size_t n = 0;
  for (const auto& t : parameter_layout(arch)) n += t.size();
  return n;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
Eigen::Map<const RowMat<T>> weight(const AlignedVector<T>& p, std::size_t off, int rows, int cols) {
  return {p.data() + off, rows, cols};
}
template <typename T>
Eigen::Map<RowMat<T>> weight(T* p, std::size_t off, int rows, int cols) {
  return {p + off, rows, cols};
}
template <typename T>
Eigen::Map<const Vec<T>> vec(const AlignedVector<T>& p, std::size_t off, int n) {
  return {p.data() + off, n};
}
template <typename T>
Eigen::Map<Vec<T>> vec(T* p, std::size_t off, int n) {
  return {p + off, n};
}

constexpr double kGeluA = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluB = 0.044715;
constexpr double kNormEps = 1e-5;

template <typename T>
void gelu(const Mat<T>& x, Mat<T>& y) {
  const auto a = x.array();
  y = (T(0.5) * a * (T(1) + (T(kGeluA) * (a + T(kGeluB) * a.cube())).tanh())).matrix();
}

// dx = dy * gelu'(x), in place on dy.
template <typename T>
void gelu_backward(const Mat<T>& x, Mat<T>& dy) {
  const auto a = x.array();
  const auto t = (T(kGeluA) * (a + T(kGeluB) * a.cube())).tanh().eval();
  dy.array() *= T(0.5) * (T(1) + t) +
                T(0.5) * a * (T(1) - t.square()) * T(kGeluA) * (T(1) + T(3 * kGeluB) * a.square());
}

// col(k*C + c, b*H + t) = a(c, b*H + t + k - pad), zero outside the sample.
template <typename T>
void im2col(const Mat<T>& a, int batch, int H, int K, Mat<T>& col) {
  const int C = static_cast<int>(a.rows());
  const int pad = K / 2;
  col.resize(static_cast<Eigen::Index>(K) * C, static_cast<Eigen::Index>(batch) * H);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < H; ++t) {
      T* dst = col.data() + (static_cast<std::size_t>(b) * H + t) * K * C;
      for (int k = 0; k < K; ++k) {
        const int s = t + k - pad;
        if (s < 0 || s >= H) {
          std::fill(dst + k * C, dst + (k + 1) * C, T(0));
        } else {
          std::memcpy(dst + k * C, a.data() + (static_cast<std::size_t>(b) * H + s) * C,
                      sizeof(T) * C);
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& col, int batch, int H, int K, Mat<T>& a) {
  const int C = static_cast<int>(col.rows()) / K;
  const int pad = K / 2;
  a.setZero(C, static_cast<Eigen::Index>(batch) * H);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < H; ++t) {
      const T* src = col.data() + (static_cast<std::size_t>(b) * H + t) * K * C;
      for (int k = 0; k < K; ++k) {
        const int s = t + k - pad;
        if (s < 0 || s >= H) continue;
        T* dst = a.data() + (static_cast<std::size_t>(b) * H + s) * C;
        for (int c = 0; c < C; ++c) dst[c] += src[k * C + c];
      }
    }
  }
}

template <typename T>
void group_norm(const Mat<T>& x, const T* gamma, const T* beta, int batch, int H, int G,
                Mat<T>& xhat, Mat<T>& inv_std, Mat<T>& y) {
  const int C = static_cast<int>(x.rows());
  const int cpg = C / G;
  xhat.resize(x.rows(), x.cols());
  inv_std.resize(G, batch);
  for (int b = 0; b < batch; ++b) {
    for (int g = 0; g < G; ++g) {
      const auto blk = x.block(g * cpg, b * H, cpg, H);
      const T mean = blk.mean();
      const T var = (blk.array() - mean).square().mean();
      const T is = T(1) / std::sqrt(var + T(kNormEps));
      inv_std(g, b) = is;
      xhat.block(g * cpg, b * H, cpg, H) = ((blk.array() - mean) * is).matrix();
    }
  }
  const Eigen::Map<const Vec<T>> gv(gamma, C), bv(beta, C);
  y = ((xhat.array().colwise() * gv.array()).colwise() + bv.array()).matrix();
}

// dy is overwritten with dx.
template <typename T>
void group_norm_backward(Mat<T>& dy, const Mat<T>& xhat, const Mat<T>& inv_std, const T* gamma,
                         T* d_gamma, T* d_beta, int batch, int H, int G) {
  const int C = static_cast<int>(dy.rows());
  const int cpg = C / G;
  Eigen::Map<Vec<T>>(d_gamma, C) += dy.cwiseProduct(xhat).rowwise().sum();
  Eigen::Map<Vec<T>>(d_beta, C) += dy.rowwise().sum();
  dy.array().colwise() *= Eigen::Map<const Vec<T>>(gamma, C).array();
  for (int b = 0; b < batch; ++b) {
    for (int g = 0; g < G; ++g) {
      auto blk = dy.block(g * cpg, b * H, cpg, H);
      const auto xh = xhat.block(g * cpg, b * H, cpg, H);
      const T m1 = blk.mean();
      const T m2 = blk.cwiseProduct(xh).mean();
      blk = (inv_std(g, b) * (blk.array() - m1 - xh.array() * m2)).matrix();
    }
  }
}

template <typename T>
void linear(const Mat<T>& x, const AlignedVector<T>& p, std::size_t w_off, std::size_t b_off,
            int out, Mat<T>& y) {
  const int in = static_cast<int>(x.rows());
  y.noalias() = weight(p, w_off, out, in) * x;
  y.colwise() += vec(p, b_off, out);
}

// Accumulates parameter gradients; dx = W' dy when dx is given.
template <typename T>
void linear_backward(const Mat<T>& x, const Mat<T>& dy, const AlignedVector<T>& p, T* grads,
                     std::size_t w_off, std::size_t b_off, Mat<T>* dx) {
  const int in = static_cast<int>(x.rows());
  const int out = static_cast<int>(dy.rows());
  weight(grads, w_off, out, in).noalias() += dy * x.transpose();
  vec(grads, b_off, out) += dy.rowwise().sum();
  if (dx) dx->noalias() = weight(p, w_off, out, in).transpose() * dy;
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Network<T>::Network(const Architecture& arch) : arch_(arch) {
  const auto layout = parameter_layout(arch_);
  std::size_t total = 0;
  for (const auto& t : layout) {
    names_.push_back(t.name);
    starts_.push_back(total);
    total += t.size();
  }
  starts_.push_back(total);
  params_.assign(total, T(0));
  auto at = [&](const std::string& name) {
    const auto it = std::find(names_.begin(), names_.end(), name);
    return starts_[static_cast<std::size_t>(it - names_.begin())];
  };
  off_.in_w = at("input.weight");
  off_.in_b = at("input.bias");
  for (int j = 0; j < arch_.blocks; ++j) {
    const std::string p = "blocks." + std::to_string(j) + ".";
    off_.blocks.push_back({at(p + "norm1.weight"), at(p + "norm1.bias"), at(p + "conv1.weight"),
                           at(p + "conv1.bias"), at(p + "norm2.weight"), at(p + "norm2.bias"),
                           at(p + "conv2.weight"), at(p + "conv2.bias")});
  }
  off_.cond1_w = at("cond.fc1.weight");
  off_.cond1_b = at("cond.fc1.bias");
  off_.cond2_w = at("cond.fc2.weight");
  off_.cond2_b = at("cond.fc2.bias");
  off_.head1_w = at("head.fc1.weight");
  off_.head1_b = at("head.fc1.bias");
  off_.head2_w = at("head.fc2.weight");
  off_.head2_b = at("head.fc2.bias");
  off_.head3_w = at("head.fc3.weight");
  off_.head3_b = at("head.fc3.bias");
}

template <typename T>
Network<T> Network<T>::initialized(const Architecture& arch, std::uint64_t seed) {
  Network net(arch);
  std::mt19937_64 rng(seed);
  const auto layout = parameter_layout(arch);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& spec = layout[i];
    T* p = net.params_.data() + net.starts_[i];
    const bool is_norm = spec.name.find(".norm") != std::string::npos;
    const bool is_output = spec.name.rfind("head.fc3.", 0) == 0;
    if (is_output) continue;
    if (is_norm) {
      if (spec.name.ends_with(".weight")) std::fill(p, p + spec.size(), T(1));
      continue;
    }
    // fan-in of the layer this tensor belongs to
    const std::string w_name = spec.name.substr(0, spec.name.rfind('.')) + ".weight";
    const auto w = std::find_if(layout.begin(), layout.end(),
                                [&](const TensorSpec& t) { return t.name == w_name; });
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < w->shape.size(); ++d) fan_in *= static_cast<std::size_t>(w->shape[d]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < spec.size(); ++k) p[k] = static_cast<T>(u(rng));
  }
  return net;
}

template <typename T>
std::span<T> Network<T>::tensor(const std::string& name) {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::out_of_range("no tensor named " + name);
  const auto i = static_cast<std::size_t>(it - names_.begin());
  return std::span<T>(params_).subspan(starts_[i], starts_[i + 1] - starts_[i]);
}

template <typename T>
void Network<T>::forward(std::span<const T> series, std::span<const T> cond, int batch,
                         std::span<T> out) const {
  const auto B = static_cast<std::size_t>(std::max(batch, 0));
  const auto per = static_cast<std::size_t>(kSeriesChannels * arch_.horizon);
  if (batch <= 0 || series.size() != B * per || cond.size() != B * kCondScalars ||
      out.size() != B * kOutputs) {
    throw std::invalid_argument("Network::forward: input sizes do not match the architecture");
  }
  Workspace<T> ws;
  for (std::size_t b = 0; b < B; ++b) {
    forward(series.subspan(b * per, per), cond.subspan(b * kCondScalars, kCondScalars), 1,
            out.subspan(b * kOutputs, kOutputs), ws);
  }
}

template <typename T>
void Network<T>::forward(std::span<const T> series, std::span<const T> cond, int batch,
                         std::span<T> out, Workspace<T>& ws) const {
  const int H = arch_.horizon;
  const int C = arch_.channels;
  const int K = arch_.kernel;
  const int G = arch_.groups;
  const auto B = static_cast<std::size_t>(batch);
  if (batch <= 0 || series.size() != B * kSeriesChannels * H || cond.size() != B * kCondScalars ||
      out.size() != B * kOutputs) {
    throw std::invalid_argument("Network::forward: input sizes do not match the architecture");
  }
  if (params_.empty()) throw std::invalid_argument("Network::forward: network has no parameters");
  const int L = batch * H;
  ws.batch = batch;

  ws.x0.resize(kSeriesChannels, L);
  for (int b = 0; b < batch; ++b) {
    for (int ch = 0; ch < kSeriesChannels; ++ch) {
      for (int t = 0; t < H; ++t) {
        ws.x0(ch, b * H + t) = series[(static_cast<std::size_t>(b) * kSeriesChannels + ch) * H + t];
      }
    }
  }
  linear(ws.x0, params_, off_.in_w, off_.in_b, C, ws.h0);

  ws.cond = Eigen::Map<const Mat<T>>(cond.data(), kCondScalars, batch);
  linear(ws.cond, params_, off_.cond1_w, off_.cond1_b, arch_.cond_hidden, ws.cond_pre);
  gelu(ws.cond_pre, ws.cond_act);
  linear(ws.cond_act, params_, off_.cond2_w, off_.cond2_b, 2 * C * arch_.blocks, ws.film);

  ws.blocks.resize(static_cast<std::size_t>(arch_.blocks));
  Mat<T>& act = ws.d_tmp;
  Mat<T> h = ws.h0;
  for (int j = 0; j < arch_.blocks; ++j) {
    auto& bk = ws.blocks[static_cast<std::size_t>(j)];
    const auto& o = off_.blocks[static_cast<std::size_t>(j)];
    bk.input = h;
    group_norm(bk.input, params_.data() + o.gn1_g, params_.data() + o.gn1_b, batch, H, G,
               bk.xhat1, bk.inv_std1, bk.pre1);
    gelu(bk.pre1, act);
    im2col(act, batch, H, K, bk.col1);
    linear(bk.col1, params_, o.conv1_w, o.conv1_b, C, bk.conv1);
    Mat<T>& m = ws.d_h;
    m.resize(C, L);
    for (int b = 0; b < batch; ++b) {
      const auto gamma = ws.film.col(b).segment(2 * C * j, C).array();
      const auto beta = ws.film.col(b).segment(2 * C * j + C, C).array();
      m.block(0, b * H, C, H) =
          ((bk.conv1.block(0, b * H, C, H).array().colwise() * (T(1) + gamma)).colwise() + beta)
              .matrix();
    }
    group_norm(m, params_.data() + o.gn2_g, params_.data() + o.gn2_b, batch, H, G, bk.xhat2,
               bk.inv_std2, bk.pre2);
    gelu(bk.pre2, act);
    im2col(act, batch, H, K, bk.col2);
    linear(bk.col2, params_, o.conv2_w, o.conv2_b, C, h);
    h += bk.input;
  }

  ws.pooled.resize(C, batch);
  for (int b = 0; b < batch; ++b) ws.pooled.col(b) = h.block(0, b * H, C, H).rowwise().mean();
  linear(ws.pooled, params_, off_.head1_w, off_.head1_b, arch_.head_hidden1, ws.head_pre1);
  gelu(ws.head_pre1, ws.head_act1);
  linear(ws.head_act1, params_, off_.head2_w, off_.head2_b, arch_.head_hidden2, ws.head_pre2);
  gelu(ws.head_pre2, ws.head_act2);
  linear(ws.head_act2, params_, off_.head3_w, off_.head3_b, kOutputs, ws.logits);

  const T eps = std::numeric_limits<T>::epsilon();
  ws.out.resize(kOutputs, batch);
  for (int b = 0; b < batch; ++b) {
    ws.out(0, b) = std::tanh(ws.logits(0, b));
    ws.out(1, b) = sigmoid(ws.logits(1, b));
    out[2 * static_cast<std::size_t>(b)] = std::clamp(ws.out(0, b), T(-1) + eps, T(1) - eps);
    out[2 * static_cast<std::size_t>(b) + 1] = std::clamp(ws.out(1, b), eps, T(1) - eps);
  }
}

template <typename T>
void Network<T>::backward(Workspace<T>& ws, std::span<const T> d_out, std::span<T> grads) const {
  const int H = arch_.horizon;
  const int C = arch_.channels;
  const int K = arch_.kernel;
  const int G = arch_.groups;
  const int batch = ws.batch;
  if (d_out.size() != static_cast<std::size_t>(batch) * kOutputs || grads.size() != params_.size()) {
    throw std::invalid_argument("Network::backward: size mismatch");
  }
  std::fill(grads.begin(), grads.end(), T(0));
  T* g = grads.data();

  Mat<T> d(kOutputs, batch);
  for (int b = 0; b < batch; ++b) {
    const T e = ws.out(0, b);
    const T s = ws.out(1, b);
    d(0, b) = d_out[2 * static_cast<std::size_t>(b)] * (T(1) - e * e);
    d(1, b) = d_out[2 * static_cast<std::size_t>(b) + 1] * s * (T(1) - s);
  }
  Mat<T> dx;
  linear_backward(ws.head_act2, d, params_, g, off_.head3_w, off_.head3_b, &dx);
  gelu_backward(ws.head_pre2, dx);
  linear_backward(ws.head_act1, dx, params_, g, off_.head2_w, off_.head2_b, &d);
  gelu_backward(ws.head_pre1, d);
  linear_backward(ws.pooled, d, params_, g, off_.head1_w, off_.head1_b, &dx);

  Mat<T>& dh = ws.d_h;
  dh.resize(C, static_cast<Eigen::Index>(batch) * H);
  for (int b = 0; b < batch; ++b) {
    dh.block(0, b * H, C, H) = (dx.col(b) / T(H)).replicate(1, H);
  }
  ws.d_film.setZero(2 * C * arch_.blocks, batch);
  Mat<T>& dm = ws.d_tmp;
  for (int j = arch_.blocks - 1; j >= 0; --j) {
    const auto& bk = ws.blocks[static_cast<std::size_t>(j)];
    const auto& o = off_.blocks[static_cast<std::size_t>(j)];
    linear_backward(bk.col2, dh, params_, g, o.conv2_w, o.conv2_b, &ws.d_col);
    col2im(ws.d_col, batch, H, K, dm);
    gelu_backward(bk.pre2, dm);
    group_norm_backward(dm, bk.xhat2, bk.inv_std2, params_.data() + o.gn2_g, g + o.gn2_g,
                        g + o.gn2_b, batch, H, G);
    for (int b = 0; b < batch; ++b) {
      auto blk = dm.block(0, b * H, C, H);
      ws.d_film.col(b).segment(2 * C * j, C) +=
          blk.cwiseProduct(bk.conv1.block(0, b * H, C, H)).rowwise().sum();
      ws.d_film.col(b).segment(2 * C * j + C, C) += blk.rowwise().sum();
      blk.array().colwise() *= T(1) + ws.film.col(b).segment(2 * C * j, C).array();
    }
    linear_backward(bk.col1, dm, params_, g, o.conv1_w, o.conv1_b, &ws.d_col);
    col2im(ws.d_col, batch, H, K, dm);
    gelu_backward(bk.pre1, dm);
    group_norm_backward(dm, bk.xhat1, bk.inv_std1, params_.data() + o.gn1_g, g + o.gn1_g,
                        g + o.gn1_b, batch, H, G);
    dh += dm;
  }
  linear_backward<T>(ws.x0, dh, params_, g, off_.in_w, off_.in_b, nullptr);

  linear_backward(ws.cond_act, ws.d_film, params_, g, off_.cond2_w, off_.cond2_b, &dx);
  gelu_backward(ws.cond_pre, dx);
  linear_backward<T>(ws.cond, dx, params_, g, off_.cond1_w, off_.cond1_b, nullptr);
}

template class Network<float>;
template class Network<double>;

template <typename T>
std::vector<T> film_modulate(std::span<const T> h, std::span<const T> gamma,
                             std::span<const T> beta) {
  const std::size_t C = gamma.size();
  if (C == 0 || beta.size() != C || h.size() % C != 0) {
    throw std::invalid_argument("film_modulate: channel dimensions do not match");
  }
  std::vector<T> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const std::size_t c = i % C;
    out[i] = h[i] * (T(1) + gamma[c]) + beta[c];
  }
  return out;
}

template std::vector<float> film_modulate(std::span<const float>, std::span<const float>,
                                          std::span<const float>);
template std::vector<double> film_modulate(std::span<const double>, std::span<const double>,
                                           std::span<const double>);

template <typename T>
T huber_loss(std::span<const T> pred, std::span<const T> target, T delta, std::span<T> grad) {
  if (pred.size() != target.size() || (!grad.empty() && grad.size() != pred.size())) {
    throw std::invalid_argument("huber_loss: size mismatch");
  }
  if (pred.empty()) return T(0);
  const T n = static_cast<T>(pred.size());
  T sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T e = pred[i] - target[i];
    const T a = std::abs(e);
    if (a <= delta) {
      sum += T(0.5) * e * e;
      if (!grad.empty()) grad[i] = e / n;
    } else {
      sum += delta * (a - T(0.5) * delta);
      if (!grad.empty()) grad[i] = (e > 0 ? delta : -delta) / n;
    }
  }
  return sum / n;
}

template float huber_loss(std::span<const float>, std::span<const float>, float, std::span<float>);
template double huber_loss(std::span<const double>, std::span<const double>, double,
                           std::span<double>);

template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState<T>& state,
                const AdamWConfig& cfg) {
  if (grads.size() != params.size()) throw std::invalid_argument("adamw_step: size mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
    state.step = 0;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T shrink = static_cast<T>(1.0 - cfg.learning_rate * cfg.weight_decay);
  const T step = static_cast<T>(cfg.learning_rate / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * grads[i] * grads[i];
    params[i] = shrink * params[i] - step * state.m[i] / (std::sqrt(state.v[i] * inv_bc2) + eps);
  }
}

template void adamw_step(std::span<float>, std::span<const float>, AdamWState<float>&,
                         const AdamWConfig&);
template void adamw_step(std::span<double>, std::span<const double>, AdamWState<double>&,
                         const AdamWConfig&);

// ---------------------------------------------------------------------------

FeatureScaling scaling_for(const SystemConfig& cfg, double nominal_load_mw) {
  FeatureScaling s;
  s.rps_mw = cfg.global_rps_capacity_mw;
  s.load_mw = nominal_load_mw;
  s.ess_energy_mwh = cfg.global_ess_capacity_mwh;
  s.ess_power_mw = c_rate_power_mw(cfg.global_ess_capacity_mwh);
  s.dtg_mw = cfg.dtg_max_mw;
  return s;
}

namespace {

double safe_ratio(double a, double b) { return b > 0.0 ? a / b : 0.0; }

}  // namespace

Features encode_features(const SystemState& state, const HorizonWindow& window,
                         const SystemConfig& cfg, const FeatureScaling& s) {
  const std::size_t H = window.size();
  if (window.load_mw.size() != H) throw std::invalid_argument("window series lengths differ");
  Features f;
  f.series.resize(2 * H);
  for (std::size_t t = 0; t < H; ++t) {
    f.series[t] = static_cast<float>(safe_ratio(window.rps_mw[t], s.rps_mw));
    f.series[H + t] = static_cast<float>(safe_ratio(window.load_mw[t], s.load_mw));
  }
  f.cond = {static_cast<float>(safe_ratio(state.ess_energy_mwh, cfg.ess_capacity_mwh)),
            static_cast<float>(safe_ratio(state.prev_dtg_mw, s.dtg_mw)),
            static_cast<float>(safe_ratio(cfg.ess_capacity_mwh, s.ess_energy_mwh)),
            static_cast<float>(safe_ratio(cfg.rps_capacity_mw, s.rps_mw))};
  return f;
}

DataPools synth_pools(std::uint64_t seed, std::size_t n_steps) {
  auto sc = scenarios::synth_scenario(seed, n_steps);
  return {std::move(sc.wind_ms), std::move(sc.load_mw)};
}

TrainingExample sample_training_example(std::mt19937_64& rng, const DataPools& pools,
                                        const SamplingConfig& cfg, long* failures) {
  const auto H = static_cast<std::size_t>(cfg.global.horizon_steps);
  const std::size_t n = std::min(pools.wind_ms.size(), pools.load_mw.size());
  if (n < H) throw std::invalid_argument("data pools are shorter than one horizon");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> start_dist(0, n - H);
  for (;;) {
    const SystemConfig sys = cfg.global.with_capacities(cfg.global.global_ess_capacity_mwh * u(rng),
                                                        cfg.global.global_rps_capacity_mw * u(rng));
    const std::size_t start = start_dist(rng);
    HorizonWindow window;
    window.rps_mw.resize(H);
    window.load_mw.resize(H);
    for (std::size_t k = 0; k < H; ++k) {
      window.rps_mw[k] =
          scenarios::wind_speed_to_power(pools.wind_ms[start + k], sys.rps_capacity_mw, cfg.curve);
      window.load_mw[k] = pools.load_mw[start + k];
    }
    SystemState state;
    state.ess_energy_mwh = sys.ess_capacity_mwh * u(rng);
    const bool off = u(rng) < cfg.prob_prev_off;
    const double level = sys.dtg_min_mw + (sys.dtg_max_mw - sys.dtg_min_mw) * u(rng);
    state.prev_dtg_mw = off ? 0.0 : level;
    Action a;
    try {
      a = mpc::mpc_policy(state, window, sys);
    } catch (const std::runtime_error&) {
      if (failures) ++*failures;
      continue;
    }
    TrainingExample ex;
    ex.features = encode_features(state, window, sys, cfg.scaling);
    ex.target = {static_cast<float>(std::clamp(a.ess_mw / cfg.scaling.ess_power_mw, -1.0, 1.0)),
                 static_cast<float>(std::clamp(a.dtg_mw / cfg.scaling.dtg_mw, 0.0, 1.0))};
    return ex;
  }
}

void Dataset::push_back(const TrainingExample& e) {
  const auto H = e.features.series.size() / kSeriesChannels;
  if (horizon == 0) horizon = static_cast<int>(H);
  if (static_cast<int>(H) != horizon) throw std::invalid_argument("example horizon mismatch");
  series.insert(series.end(), e.features.series.begin(), e.features.series.end());
  cond.insert(cond.end(), e.features.cond.begin(), e.features.cond.end());
  target.insert(target.end(), e.target.begin(), e.target.end());
}

Dataset sample_dataset(std::size_t n, std::uint64_t seed, const DataPools& pools,
                       const SamplingConfig& cfg, int threads,
                       const std::function<void(std::size_t)>& progress) {
  std::vector<TrainingExample> examples(n);
  std::vector<long> failures(n, 0);
  std::mutex mutex;
  std::size_t done = 0;
  parallel_for(n, threads, [&](std::size_t i) {
    std::mt19937_64 rng(scenarios::derive_seed(seed, i));
    examples[i] = sample_training_example(rng, pools, cfg, &failures[i]);
    if (progress) {
      std::lock_guard lock(mutex);
      progress(++done);
    }
  });
  Dataset d;
  d.horizon = cfg.global.horizon_steps;
  d.scaling = cfg.scaling;
  for (const auto& e : examples) d.push_back(e);
  d.failures = std::accumulate(failures.begin(), failures.end(), 0L);
  return d;
}

// ---------------------------------------------------------------------------
// Manifest + payload files

namespace {

std::uint32_t swap_bytes(std::uint32_t u) {
  return (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
}

void write_floats(std::ostream& out, std::span<const float> v) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  } else {
    for (float f : v) {
      const auto u = swap_bytes(std::bit_cast<std::uint32_t>(f));
      out.write(reinterpret_cast<const char*>(&u), sizeof u);
    }
  }
}

void read_floats(std::istream& in, std::span<float> v, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(v.size() * sizeof(float))) {
    throw std::runtime_error(path.string() + ": payload is shorter than the manifest declares");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : v) f = std::bit_cast<float>(swap_bytes(std::bit_cast<std::uint32_t>(f)));
  }
}

json scaling_json(const FeatureScaling& s) {
  return {{"rps_mw", s.rps_mw},
          {"load_mw", s.load_mw},
          {"ess_energy_mwh", s.ess_energy_mwh},
          {"ess_power_mw", s.ess_power_mw},
          {"dtg_mw", s.dtg_mw}};
}

FeatureScaling scaling_from(const json& j) {
  FeatureScaling s;
  s.rps_mw = j.at("rps_mw").get<double>();
  s.load_mw = j.at("load_mw").get<double>();
  s.ess_energy_mwh = j.at("ess_energy_mwh").get<double>();
  s.ess_power_mw = j.at("ess_power_mw").get<double>();
  s.dtg_mw = j.at("dtg_mw").get<double>();
  return s;
}

constexpr int kFormatVersion = 1;

json read_manifest(std::istream& in, const std::filesystem::path& path, const std::string& format) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing manifest");
  json m;
  try {
    m = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed manifest: " + e.what());
  }
  if (m.value("format", std::string{}) != format) {
    throw std::runtime_error(path.string() + ": not a " + format + " file");
  }
  if (m.value("version", -1) != kFormatVersion) {
    throw std::runtime_error(path.string() + ": unsupported format version");
  }
  if (m.value("dtype", std::string{}) != "float32" ||
      m.value("byte_order", std::string{}) != "little") {
    throw std::runtime_error(path.string() + ": payload must be little-endian float32");
  }
  return m;
}

void expect_end(std::istream& in, const std::filesystem::path& path) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error(path.string() + ": payload is longer than the manifest declares");
  }
}

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  const auto n = static_cast<int>(d.size());
  json m = {{"format", "hybridsize-dataset"},
            {"version", kFormatVersion},
            {"dtype", "float32"},
            {"byte_order", "little"},
            {"horizon", d.horizon},
            {"count", n},
            {"failures", d.failures},
            {"scaling", scaling_json(d.scaling)},
            {"tensors",
             json::array({{{"name", "series"}, {"shape", {n, kSeriesChannels, d.horizon}}},
                          {{"name", "cond"}, {"shape", {n, kCondScalars}}},
                          {{"name", "target"}, {"shape", {n, kOutputs}}}})}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << m.dump() << '\n';
  write_floats(out, d.series);
  write_floats(out, d.cond);
  write_floats(out, d.target);
  if (!out) throw std::runtime_error("error writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const json m = read_manifest(in, path, "hybridsize-dataset");
  Dataset d;
  std::size_t n = 0;
  try {
    d.horizon = m.at("horizon").get<int>();
    n = m.at("count").get<std::size_t>();
    d.failures = m.value("failures", 0L);
    d.scaling = scaling_from(m.at("scaling"));
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed manifest: " + e.what());
  }
  if (d.horizon <= 0) throw std::runtime_error(path.string() + ": horizon must be positive");
  d.series.resize(n * kSeriesChannels * static_cast<std::size_t>(d.horizon));
  d.cond.resize(n * kCondScalars);
  d.target.resize(n * kOutputs);
  read_floats(in, d.series, path);
  read_floats(in, d.cond, path);
  read_floats(in, d.target, path);
  expect_end(in, path);
  return d;
}

void save_weights(const PolicyModel& model, const std::filesystem::path& path) {
  const auto& a = model.net.architecture();
  json tensors = json::array();
  for (const auto& t : parameter_layout(a)) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  json m = {{"format", "hybridsize-weights"},
            {"version", kFormatVersion},
            {"dtype", "float32"},
            {"byte_order", "little"},
            {"architecture",
             {{"horizon", a.horizon},
              {"channels", a.channels},
              {"blocks", a.blocks},
              {"cond_hidden", a.cond_hidden},
              {"head_hidden1", a.head_hidden1},
              {"head_hidden2", a.head_hidden2},
              {"groups", a.groups},
              {"kernel", a.kernel}}},
            {"scaling", scaling_json(model.scaling)},
            {"tensors", tensors}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << m.dump() << '\n';
  write_floats(out, model.net.parameters());
  if (!out) throw std::runtime_error("error writing " + path.string());
}

PolicyModel load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const json m = read_manifest(in, path, "hybridsize-weights");
  Architecture a;
  PolicyModel model;
  std::vector<TensorSpec> declared;
  try {
    const auto& j = m.at("architecture");
    a.horizon = j.at("horizon").get<int>();
    a.channels = j.at("channels").get<int>();
    a.blocks = j.at("blocks").get<int>();
    a.cond_hidden = j.at("cond_hidden").get<int>();
    a.head_hidden1 = j.at("head_hidden1").get<int>();
    a.head_hidden2 = j.at("head_hidden2").get<int>();
    a.groups = j.at("groups").get<int>();
    a.kernel = j.at("kernel").get<int>();
    model.scaling = scaling_from(m.at("scaling"));
    for (const auto& t : m.at("tensors")) {
      declared.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>()});
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed manifest: " + e.what());
  }
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  const auto expected = parameter_layout(a);
  if (declared.size() != expected.size()) {
    throw std::runtime_error(path.string() + ": tensor list does not match the architecture");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (declared[i].name != expected[i].name || declared[i].shape != expected[i].shape) {
      throw std::runtime_error(path.string() + ": tensor " + declared[i].name +
                               " does not match the architecture");
    }
  }
  model.net = PolicyNetwork(a);
  read_floats(in, model.net.parameters(), path);
  expect_end(in, path);
  return model;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct BatchBuffers {
  AlignedVector<float> series, cond, target, out, grad;

  void gather(const Dataset& d, std::span<const std::size_t> rows) {
    const std::size_t sl = static_cast<std::size_t>(kSeriesChannels) * d.horizon;
    series.resize(rows.size() * sl);
    cond.resize(rows.size() * kCondScalars);
    target.resize(rows.size() * kOutputs);
    out.resize(rows.size() * kOutputs);
    grad.resize(rows.size() * kOutputs);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      std::copy_n(d.series.begin() + static_cast<std::ptrdiff_t>(r * sl), sl,
                  series.begin() + static_cast<std::ptrdiff_t>(i * sl));
      std::copy_n(d.cond.begin() + static_cast<std::ptrdiff_t>(r * kCondScalars), kCondScalars,
                  cond.begin() + static_cast<std::ptrdiff_t>(i * kCondScalars));
      std::copy_n(d.target.begin() + static_cast<std::ptrdiff_t>(r * kOutputs), kOutputs,
                  target.begin() + static_cast<std::ptrdiff_t>(i * kOutputs));
    }
  }
};

constexpr int kEvalBatch = 512;

}  // namespace

EpochMetrics evaluate(const PolicyModel& model, const Dataset& data,
                      std::span<const std::size_t> rows, double huber_delta) {
  EpochMetrics m;
  if (rows.empty()) return m;
  Workspace<float> ws;
  BatchBuffers buf;
  double loss = 0.0, abs_err = 0.0;
  for (std::size_t begin = 0; begin < rows.size(); begin += kEvalBatch) {
    const auto part = rows.subspan(begin, std::min<std::size_t>(kEvalBatch, rows.size() - begin));
    buf.gather(data, part);
    model.net.forward(buf.series, buf.cond, static_cast<int>(part.size()), buf.out, ws);
    loss += static_cast<double>(
                huber_loss<float>(buf.out, buf.target, static_cast<float>(huber_delta))) *
            static_cast<double>(part.size());
    for (std::size_t i = 0; i < part.size(); ++i) {
      abs_err += std::abs(static_cast<double>(buf.out[2 * i]) - buf.target[2 * i]) *
                 model.scaling.ess_power_mw;
      abs_err += std::abs(static_cast<double>(buf.out[2 * i + 1]) - buf.target[2 * i + 1]) *
                 model.scaling.dtg_mw;
    }
  }
  m.val_loss = loss / static_cast<double>(rows.size());
  m.val_mae_mw = abs_err / (2.0 * static_cast<double>(rows.size()));
  return m;
}

double scheduled_learning_rate(const TrainConfig& cfg, long step, long total_steps) {
  if (!cfg.cosine_decay || total_steps <= 0) return cfg.learning_rate;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

TrainResult train(const Dataset& data, const Architecture& arch, const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  arch.validate();
  if (data.horizon != arch.horizon) {
    throw std::invalid_argument("dataset horizon does not match the architecture");
  }
  if (cfg.batch_size <= 0 || cfg.epochs < 0 || !(cfg.validation_fraction >= 0.0) ||
      cfg.validation_fraction >= 1.0) {
    throw std::invalid_argument("invalid training configuration");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(scenarios::derive_seed(cfg.seed, 0));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(n)));
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  if (rows.size() < 2 * batch) {
    throw std::invalid_argument("training split must hold at least two batches");
  }
  std::sort(rows.begin(), rows.end());

  TrainResult result;
  result.model.net = PolicyNetwork::initialized(arch, scenarios::derive_seed(cfg.seed, 1));
  result.model.scaling = data.scaling;
  auto& net = result.model.net;
  AdamWState<float> opt;
  AdamWConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const auto total_steps = static_cast<long>((rows.size() + batch - 1) / batch) * cfg.epochs;
  long step = 0;
  Workspace<float> ws;
  BatchBuffers buf;
  AlignedVector<float> grads(net.parameters().size());
  const auto delta = static_cast<float>(cfg.huber_delta);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(rows.begin(), rows.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < rows.size(); begin += batch, ++batch_index) {
      const auto part = std::span<const std::size_t>(rows).subspan(
          begin, std::min(batch, rows.size() - begin));
      buf.gather(data, part);
      const int b = static_cast<int>(part.size());
      net.forward(buf.series, buf.cond, b, buf.out, ws);
      const float loss = huber_loss<float>(buf.out, buf.target, delta, buf.grad);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch << ", batch " << batch_index
            << " (learning rate " << cfg.learning_rate << ")";
        throw std::runtime_error(msg.str());
      }
      loss_sum += static_cast<double>(loss) * b;
      net.backward(ws, buf.grad, grads);
      adam.learning_rate = scheduled_learning_rate(cfg, step++, total_steps);
      adamw_step<float>(net.parameters(), grads, opt, adam);
    }
    EpochMetrics m = evaluate(result.model, data, val, cfg.huber_delta);
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(rows.size());
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

}  // namespace hybridsize::neural
