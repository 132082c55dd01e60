#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "swarm/common.hpp"

namespace swarm {

enum class Head { linear, softmax };
enum class Mode { train, eval };

/// Backward was handed a tape that does not match the current parameters
/// (the network was updated after the forward pass) or an eval-mode tape.
class StaleTapeError : public std::logic_error {
 public:
  explicit StaleTapeError(const std::string& what) : std::logic_error(what) {}
};

/// Shape of a residual MLP with ReLU hidden layers. Residual skips wrap
/// each hidden layer; when the widths differ a linear projection carries
/// the skip. Batch normalization (running stats, momentum 0.9) sits
/// between the affine map and the ReLU when enabled.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden = {128, 128};
  int output_dim = 0;
  bool residual = false;
  bool batch_norm = false;
  Head head = Head::linear;

  bool operator==(const MlpSpec&) const = default;

  void validate() const {
    if (input_dim < 1) throw ConfigError("MlpSpec: input_dim must be >= 1");
    if (output_dim < 1) throw ConfigError("MlpSpec: output_dim must be >= 1");
    for (int h : hidden)
      if (h < 1) throw ConfigError("MlpSpec: hidden widths must be >= 1");
  }
};

namespace nn_detail {

struct LayerLayout {
  int in = 0;
  int out = 0;
  std::ptrdiff_t w = 0;
  std::ptrdiff_t b = 0;
  std::ptrdiff_t proj = -1;      // residual projection when in != out
  std::ptrdiff_t gamma = -1;     // batch-norm scale
  std::ptrdiff_t beta = -1;      // batch-norm shift
  std::ptrdiff_t run_mean = -1;  // offsets into the buffer vector
  std::ptrdiff_t run_var = -1;
};

struct NetLayout {
  std::vector<LayerLayout> layers;
  int head_in = 0;
  std::ptrdiff_t head_w = 0;
  std::ptrdiff_t head_b = 0;
  std::size_t value_count = 0;
  std::size_t buffer_count = 0;
};

inline NetLayout make_layout(const MlpSpec& spec) {
  spec.validate();
  NetLayout net;
  std::ptrdiff_t off = 0;
  std::ptrdiff_t buf = 0;
  int width = spec.input_dim;
  for (int h : spec.hidden) {
    LayerLayout l;
    l.in = width;
    l.out = h;
    l.w = off;
    off += static_cast<std::ptrdiff_t>(h) * width;
    l.b = off;
    off += h;
    if (spec.residual && l.in != l.out) {
      l.proj = off;
      off += static_cast<std::ptrdiff_t>(h) * width;
    }
    if (spec.batch_norm) {
      l.gamma = off;
      off += h;
      l.beta = off;
      off += h;
      l.run_mean = buf;
      buf += h;
      l.run_var = buf;
      buf += h;
    }
    net.layers.push_back(l);
    width = h;
  }
  net.head_in = width;
  net.head_w = off;
  off += static_cast<std::ptrdiff_t>(spec.output_dim) * width;
  net.head_b = off;
  off += spec.output_dim;
  net.value_count = static_cast<std::size_t>(off);
  net.buffer_count = static_cast<std::size_t>(buf);
  return net;
}

}  // namespace nn_detail

/// A network = shape + flat trainable values + non-trainable buffers
/// (batch-norm running statistics). version increments on every update
/// and lets tapes detect staleness.
struct NetworkParams {
  MlpSpec spec;
  std::vector<double> values;
  std::vector<double> buffers;
  std::int64_t version = 0;
};

inline std::size_t param_count(const MlpSpec& spec) {
  return nn_detail::make_layout(spec).value_count;
}

/// Seed-deterministic initialization: every weight uniform in
/// [-1/sqrt(fan_in), +1/sqrt(fan_in)]; batch-norm scale 1, shift 0;
/// running stats at (0, 1).
inline NetworkParams init_params(const MlpSpec& spec, Rng& rng) {
  const nn_detail::NetLayout net = nn_detail::make_layout(spec);
  NetworkParams p;
  p.spec = spec;
  p.values.assign(net.value_count, 0.0);
  p.buffers.assign(net.buffer_count, 0.0);
  auto fill_uniform = [&](std::ptrdiff_t off, std::ptrdiff_t count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::ptrdiff_t k = 0; k < count; ++k)
      p.values[off + k] = rng.uniform(-bound, bound);
  };
  for (const auto& l : net.layers) {
    fill_uniform(l.w, static_cast<std::ptrdiff_t>(l.out) * l.in, l.in);
    fill_uniform(l.b, l.out, l.in);
    if (l.proj >= 0) fill_uniform(l.proj, static_cast<std::ptrdiff_t>(l.out) * l.in, l.in);
    if (l.gamma >= 0) {
      for (int k = 0; k < l.out; ++k) p.values[l.gamma + k] = 1.0;
      for (int k = 0; k < l.out; ++k) p.values[l.beta + k] = 0.0;
      for (int k = 0; k < l.out; ++k) p.buffers[l.run_mean + k] = 0.0;
      for (int k = 0; k < l.out; ++k) p.buffers[l.run_var + k] = 1.0;
    }
  }
  fill_uniform(net.head_w, static_cast<std::ptrdiff_t>(spec.output_dim) * net.head_in,
               net.head_in);
  fill_uniform(net.head_b, spec.output_dim, net.head_in);
  return p;
}

/// Intermediates recorded by a train-mode forward pass.
struct Tape {
  bool valid = false;
  Mode mode = Mode::eval;
  std::int64_t params_version = 0;
  struct LayerTape {
    Eigen::MatrixXd x_in;     // layer input
    Eigen::MatrixXd relu_in;  // value fed into the ReLU (post-BN when on)
    Eigen::MatrixXd xhat;     // normalized activations (BN only)
    Eigen::VectorXd invstd;   // per-unit 1/sqrt(var+eps) (BN only)
  };
  std::vector<LayerTape> layers;
  Eigen::MatrixXd head_in;
  Eigen::MatrixXd outputs;
};

struct ForwardResult {
  Eigen::MatrixXd outputs;
  Tape tape;
};

namespace nn_detail {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;

inline ForwardResult forward_impl(const NetworkParams& params,
                                  const Eigen::MatrixXd& batch, Mode mode,
                                  double* mutable_buffers) {
  const MlpSpec& spec = params.spec;
  const NetLayout net = make_layout(spec);
  if (params.values.size() != net.value_count)
    throw std::invalid_argument("forward: parameter vector length mismatch");
  if (batch.cols() != spec.input_dim)
    throw std::invalid_argument("forward: batch width does not match input_dim");

  ForwardResult res;
  Tape& tape = res.tape;
  const bool record = mode == Mode::train;
  tape.valid = record;
  tape.mode = mode;
  tape.params_version = params.version;
  if (record) tape.layers.resize(net.layers.size());

  const double* v = params.values.data();
  Eigen::MatrixXd x = batch;
  const double batch_n = static_cast<double>(batch.rows());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const LayerLayout& l = net.layers[li];
    ConstMap w(v + l.w, l.out, l.in);
    ConstVec b(v + l.b, l.out);
    Eigen::MatrixXd z = x * w.transpose();
    z.rowwise() += b.transpose();

    Eigen::MatrixXd relu_in;
    Eigen::MatrixXd xhat;
    Eigen::VectorXd invstd;
    if (spec.batch_norm) {
      ConstVec gamma(v + l.gamma, l.out);
      ConstVec beta(v + l.beta, l.out);
      Eigen::VectorXd mean(l.out);
      Eigen::VectorXd var(l.out);
      if (mode == Mode::train) {
        for (int k = 0; k < l.out; ++k) {
          mean[k] = z.col(k).mean();
          var[k] = (z.col(k).array() - mean[k]).square().sum() / batch_n;
        }
        if (mutable_buffers) {
          for (int k = 0; k < l.out; ++k) {
            mutable_buffers[l.run_mean + k] =
                kBnMomentum * mutable_buffers[l.run_mean + k] +
                (1.0 - kBnMomentum) * mean[k];
            mutable_buffers[l.run_var + k] =
                kBnMomentum * mutable_buffers[l.run_var + k] +
                (1.0 - kBnMomentum) * var[k];
          }
        }
      } else {
        for (int k = 0; k < l.out; ++k) {
          mean[k] = params.buffers[l.run_mean + k];
          var[k] = params.buffers[l.run_var + k];
        }
      }
      invstd.resize(l.out);
      xhat.resize(z.rows(), l.out);
      relu_in.resize(z.rows(), l.out);
      for (int k = 0; k < l.out; ++k) {
        invstd[k] = 1.0 / std::sqrt(var[k] + kBnEps);
        xhat.col(k) = (z.col(k).array() - mean[k]) * invstd[k];
        relu_in.col(k) = xhat.col(k) * gamma[k];
        relu_in.col(k).array() += beta[k];
      }
    } else {
      relu_in = std::move(z);
    }

    Eigen::MatrixXd out = relu_in.cwiseMax(0.0);
    if (spec.residual) {
      if (l.proj >= 0) {
        ConstMap proj(v + l.proj, l.out, l.in);
        out.noalias() += x * proj.transpose();
      } else {
        out += x;
      }
    }
    if (record) {
      Tape::LayerTape& lt = tape.layers[li];
      lt.x_in = std::move(x);
      lt.relu_in = std::move(relu_in);
      if (spec.batch_norm) {
        lt.xhat = std::move(xhat);
        lt.invstd = std::move(invstd);
      }
    }
    x = std::move(out);
  }

  ConstMap head_w(v + net.head_w, spec.output_dim, net.head_in);
  ConstVec head_b(v + net.head_b, spec.output_dim);
  Eigen::MatrixXd logits = x * head_w.transpose();
  logits.rowwise() += head_b.transpose();
  if (record) tape.head_in = std::move(x);

  if (spec.head == Head::softmax) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double mx = logits.row(r).maxCoeff();
      logits.row(r) = (logits.row(r).array() - mx).exp().matrix();
      logits.row(r) /= logits.row(r).sum();
    }
  }
  res.outputs = std::move(logits);
  if (record) tape.outputs = res.outputs;
  return res;
}

}  // namespace nn_detail

/// Runs the network on a row-per-sample batch. Train mode records a tape
/// for backward and, with batch norm on, refreshes the running stats.
inline ForwardResult forward(NetworkParams& params, const Eigen::MatrixXd& batch,
                             Mode mode) {
  double* buffers =
      (mode == Mode::train && !params.buffers.empty()) ? params.buffers.data() : nullptr;
  return nn_detail::forward_impl(params, batch, mode, buffers);
}

/// Eval-mode forward that leaves the network untouched.
inline Eigen::MatrixXd forward_eval(const NetworkParams& params,
                                    const Eigen::MatrixXd& batch) {
  return nn_detail::forward_impl(params, batch, Mode::eval, nullptr).outputs;
}

struct BackwardResult {
  std::vector<double> param_grads;  // aligned with NetworkParams::values
  Eigen::MatrixXd input_grads;      // batch x input_dim
};

/// Exact gradient of sum(outputs .* output_grad) with respect to every
/// parameter and to the batch input. The tape must come from a
/// train-mode forward against the same parameter version.
inline BackwardResult backward(const NetworkParams& params, const Tape& tape,
                               const Eigen::MatrixXd& output_grad) {
  using nn_detail::ConstMap;
  using nn_detail::ConstVec;
  if (!tape.valid || tape.mode != Mode::train)
    throw StaleTapeError("backward: tape was not recorded in train mode");
  if (tape.params_version != params.version)
    throw StaleTapeError("backward: tape is stale (parameters changed)");
  const MlpSpec& spec = params.spec;
  const nn_detail::NetLayout net = nn_detail::make_layout(spec);
  if (output_grad.rows() != tape.outputs.rows() ||
      output_grad.cols() != tape.outputs.cols())
    throw std::invalid_argument("backward: output gradient shape mismatch");

  BackwardResult res;
  res.param_grads.assign(net.value_count, 0.0);
  double* g = res.param_grads.data();
  const double* v = params.values.data();

  Eigen::MatrixXd d_logits;
  if (spec.head == Head::softmax) {
    d_logits.resizeLike(output_grad);
    for (Eigen::Index r = 0; r < output_grad.rows(); ++r) {
      const auto s = tape.outputs.row(r).array();
      const auto go = output_grad.row(r).array();
      const double dot = (go * s).sum();
      d_logits.row(r) = (s * (go - dot)).matrix();
    }
  } else {
    d_logits = output_grad;
  }

  {
    Eigen::Map<Eigen::MatrixXd> d_head_w(g + net.head_w, spec.output_dim, net.head_in);
    Eigen::Map<Eigen::VectorXd> d_head_b(g + net.head_b, spec.output_dim);
    d_head_w.noalias() = d_logits.transpose() * tape.head_in;
    d_head_b = d_logits.colwise().sum().transpose();
  }
  ConstMap head_w(v + net.head_w, spec.output_dim, net.head_in);
  Eigen::MatrixXd dx = d_logits * head_w;

  for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
    const nn_detail::LayerLayout& l = net.layers[li];
    const Tape::LayerTape& lt = tape.layers[li];
    // dx currently holds the gradient at this layer's output.
    Eigen::MatrixXd d_relu = (lt.relu_in.array() > 0.0).select(dx, 0.0);

    Eigen::MatrixXd dz;
    if (spec.batch_norm) {
      ConstVec gamma(v + l.gamma, l.out);
      Eigen::Map<Eigen::VectorXd> d_gamma(g + l.gamma, l.out);
      Eigen::Map<Eigen::VectorXd> d_beta(g + l.beta, l.out);
      const double n = static_cast<double>(d_relu.rows());
      dz.resize(d_relu.rows(), l.out);
      for (int k = 0; k < l.out; ++k) {
        d_gamma[k] = (d_relu.col(k).array() * lt.xhat.col(k).array()).sum();
        d_beta[k] = d_relu.col(k).sum();
        const Eigen::ArrayXd d_xhat = d_relu.col(k).array() * gamma[k];
        const double s1 = d_xhat.sum();
        const double s2 = (d_xhat * lt.xhat.col(k).array()).sum();
        dz.col(k) =
            ((d_xhat * n - s1 - lt.xhat.col(k).array() * s2) * (lt.invstd[k] / n))
                .matrix();
      }
    } else {
      dz = std::move(d_relu);
    }

    {
      Eigen::Map<Eigen::MatrixXd> d_w(g + l.w, l.out, l.in);
      Eigen::Map<Eigen::VectorXd> d_b(g + l.b, l.out);
      d_w.noalias() = dz.transpose() * lt.x_in;
      d_b = dz.colwise().sum().transpose();
    }
    ConstMap w(v + l.w, l.out, l.in);
    Eigen::MatrixXd dx_next = dz * w;
    if (spec.residual) {
      if (l.proj >= 0) {
        Eigen::Map<Eigen::MatrixXd> d_proj(g + l.proj, l.out, l.in);
        d_proj.noalias() = dx.transpose() * lt.x_in;
        ConstMap proj(v + l.proj, l.out, l.in);
        dx_next.noalias() += dx * proj;
      } else {
        dx_next += dx;
      }
    }
    dx = std::move(dx_next);
  }
  res.input_grads = std::move(dx);
  return res;
}

/// Adam with bias correction. Hyperparameters default to the usual
/// (0.9, 0.999, 1e-8).
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState(std::size_t n, double learning_rate)
      : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}
};

/// One optimizer step. A non-finite gradient rejects the whole update
/// (parameters and moments untouched) with a numerical fault.
inline void adam_step(NetworkParams& params, const std::vector<double>& grads,
                      AdamState& st) {
  if (grads.size() != params.values.size() || st.m.size() != grads.size())
    throw std::invalid_argument("adam_step: gradient length mismatch");
  for (double gk : grads) {
    if (!std::isfinite(gk))
      throw NumericalFault("adam_step: non-finite gradient, update rejected");
  }
  st.step += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * grads[k];
    st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * grads[k] * grads[k];
    const double mhat = st.m[k] / c1;
    const double vhat = st.v[k] / c2;
    params.values[k] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
  params.version += 1;
}

/// Soft target update: target <- eta * live + (1 - eta) * target.
inline void soft_update(NetworkParams& target, const NetworkParams& live,
                        double eta) {
  if (!(target.spec == live.spec))
    throw std::invalid_argument("soft_update: network specs differ");
  for (std::size_t k = 0; k < target.values.size(); ++k)
    target.values[k] = eta * live.values[k] + (1.0 - eta) * target.values[k];
  for (std::size_t k = 0; k < target.buffers.size(); ++k)
    target.buffers[k] = eta * live.buffers[k] + (1.0 - eta) * target.buffers[k];
  target.version += 1;
}

namespace nn_detail {

constexpr char kMagic[4] = {'S', 'W', 'N', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError(std::string("checkpoint truncated while reading ") + what);
  return value;
}

}  // namespace nn_detail

/// Binary little-endian checkpoint: magic, format version, spec fields,
/// then the raw value and buffer doubles. Round-trips are bit-exact.
inline void save_params(const std::string& path, const NetworkParams& params) {
  using namespace nn_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<std::int32_t>(params.spec.input_dim));
  write_pod(out, static_cast<std::uint32_t>(params.spec.hidden.size()));
  for (int h : params.spec.hidden) write_pod(out, static_cast<std::int32_t>(h));
  write_pod(out, static_cast<std::int32_t>(params.spec.output_dim));
  write_pod(out, static_cast<std::uint8_t>(params.spec.residual ? 1 : 0));
  write_pod(out, static_cast<std::uint8_t>(params.spec.batch_norm ? 1 : 0));
  write_pod(out, static_cast<std::uint8_t>(params.spec.head == Head::softmax ? 1 : 0));
  write_pod(out, static_cast<std::int64_t>(params.version));
  write_pod(out, static_cast<std::uint64_t>(params.values.size()));
  write_pod(out, static_cast<std::uint64_t>(params.buffers.size()));
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(params.buffers.data()),
            static_cast<std::streamsize>(params.buffers.size() * sizeof(double)));
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

inline NetworkParams load_params(const std::string& path) {
  using namespace nn_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a network checkpoint (bad magic): " + path);
  const auto version = read_pod<std::uint32_t>(in, "format version");
  if (version != kFormatVersion)
    throw CheckpointVersionError("unsupported checkpoint format version " +
                                 std::to_string(version) + " in " + path);
  NetworkParams p;
  p.spec.input_dim = read_pod<std::int32_t>(in, "input_dim");
  const auto n_hidden = read_pod<std::uint32_t>(in, "hidden count");
  if (n_hidden > 1024) throw DataError("corrupt checkpoint header: " + path);
  p.spec.hidden.clear();
  for (std::uint32_t k = 0; k < n_hidden; ++k)
    p.spec.hidden.push_back(read_pod<std::int32_t>(in, "hidden width"));
  p.spec.output_dim = read_pod<std::int32_t>(in, "output_dim");
  p.spec.residual = read_pod<std::uint8_t>(in, "residual flag") != 0;
  p.spec.batch_norm = read_pod<std::uint8_t>(in, "batch_norm flag") != 0;
  p.spec.head =
      read_pod<std::uint8_t>(in, "head tag") != 0 ? Head::softmax : Head::linear;
  p.version = read_pod<std::int64_t>(in, "params version");
  const auto n_values = read_pod<std::uint64_t>(in, "value count");
  const auto n_buffers = read_pod<std::uint64_t>(in, "buffer count");
  const nn_detail::NetLayout net = nn_detail::make_layout(p.spec);
  if (n_values != net.value_count || n_buffers != net.buffer_count)
    throw DataError("checkpoint length does not match its spec: " + path);
  p.values.resize(n_values);
  p.buffers.resize(n_buffers);
  in.read(reinterpret_cast<char*>(p.values.data()),
          static_cast<std::streamsize>(n_values * sizeof(double)));
  if (!in) throw DataError("checkpoint truncated while reading values: " + path);
  in.read(reinterpret_cast<char*>(p.buffers.data()),
          static_cast<std::streamsize>(n_buffers * sizeof(double)));
  if (n_buffers > 0 && !in)
    throw DataError("checkpoint truncated while reading buffers: " + path);
  return p;
}

}  // namespace swarm
