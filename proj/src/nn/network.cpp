// Copyright 2026 The dovkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dovkit/nn/network.hpp"

#include "dovkit/errors.hpp"
#include "dovkit/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <string>

namespace dovkit::nn {

struct ActShape {
  int c, h, w;
};

class GraphBuilder {
 public:
  GraphBuilder(Network& net, ImageShape input) : net_(net) {
    shapes_.push_back({input.channels, input.height, input.width});
  }

  int conv(int in, int out_c, int kernel, int stride, float init_scale = 1.0f) {
    const ActShape s = shapes_[static_cast<std::size_t>(in)];
    Node n;
    n.kind = OpKind::kConv;
    n.input = in;
    n.in_c = s.c, n.in_h = s.h, n.in_w = s.w;
    n.kernel = kernel;
    n.stride = stride;
    n.pad = kernel / 2;
    n.out_c = out_c;
    n.out_h = (s.h + 2 * n.pad - kernel) / stride + 1;
    n.out_w = (s.w + 2 * n.pad - kernel) / stride + 1;
    n.init_scale = init_scale;
    const std::string name = "conv" + std::to_string(conv_count_++);
    n.weight = add_param(name + ".weight", {out_c, kernel, kernel, s.c});
    n.bias = add_param(name + ".bias", {out_c});
    return push(n);
  }

  int relu(int in) { return unary(OpKind::kRelu, in); }

  int maxpool(int in) {
    const ActShape s = shapes_[static_cast<std::size_t>(in)];
    if (s.h % 2 || s.w % 2) throw PreconditionError("max pooling needs even spatial dims");
    Node n = base(OpKind::kMaxPool, in);
    n.out_h = s.h / 2;
    n.out_w = s.w / 2;
    return push(n);
  }

  int add(int a, int b) {
    Node n = base(OpKind::kAdd, a);
    n.input2 = b;
    return push(n);
  }

  int global_avg_pool(int in) {
    Node n = base(OpKind::kGlobalAvgPool, in);
    n.out_h = n.out_w = 1;
    return push(n);
  }

  int flatten(int in) {
    Node n = base(OpKind::kFlatten, in);
    n.out_c = n.in_c * n.in_h * n.in_w;
    n.out_h = n.out_w = 1;
    return push(n);
  }

  int linear(int in, int out, float init_scale = 1.0f) {
    const ActShape s = shapes_[static_cast<std::size_t>(in)];
    if (s.h != 1 || s.w != 1) throw PreconditionError("linear layer needs a flat input");
    Node n = base(OpKind::kLinear, in);
    n.out_c = out;
    n.init_scale = init_scale;
    const std::string name = "fc" + std::to_string(linear_count_++);
    n.weight = add_param(name + ".weight", {out, s.c});
    n.bias = add_param(name + ".bias", {out});
    return push(n);
  }

  // relu(x + conv(relu(conv(x)))) with the second conv starting at zero.
  int residual(int in) {
    const int c = shapes_[static_cast<std::size_t>(in)].c;
    const int h = relu(conv(in, c, 3, 1));
    const int branch = conv(h, c, 3, 1, 0.0f);
    return relu(add(in, branch));
  }

 private:
  Node base(OpKind kind, int in) const {
    const ActShape s = shapes_[static_cast<std::size_t>(in)];
    Node n;
    n.kind = kind;
    n.input = in;
    n.in_c = n.out_c = s.c;
    n.in_h = n.out_h = s.h;
    n.in_w = n.out_w = s.w;
    return n;
  }

  int unary(OpKind kind, int in) { return push(base(kind, in)); }

  int push(const Node& n) {
    net_.nodes_.push_back(n);
    shapes_.push_back({n.out_c, n.out_h, n.out_w});
    return static_cast<int>(shapes_.size()) - 1;
  }

  Eigen::Index add_param(const std::string& name, std::vector<int> shape) {
    Eigen::Index size = 1;
    for (int d : shape) size *= d;
    ParamEntry e{name, std::move(shape), net_.num_params_, size};
    net_.num_params_ += size;
    net_.manifest_.push_back(std::move(e));
    return net_.manifest_.back().offset;
  }

  Network& net_;
  std::vector<ActShape> shapes_;
  int conv_count_ = 0;
  int linear_count_ = 0;
};

namespace {

constexpr double kInputScale = 2.0;

bool parse_suffix_int(std::string_view s, std::string_view prefix, int& out) {
  if (s.substr(0, prefix.size()) != prefix) return false;
  const auto rest = s.substr(prefix.size());
  const auto res = std::from_chars(rest.data(), rest.data() + rest.size(), out);
  return res.ec == std::errc() && res.ptr == rest.data() + rest.size() && out > 0;
}

// Channel-fastest (HWC per sample) <-> plane-major (CHW per column).
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
void chw_to_hwc(const Eigen::Ref<const Mat<Scalar>>& in, ImageShape s, Mat<Scalar>& out) {
  const int hw = s.plane();
  const auto batch = in.cols();
  out.resize(s.channels, hw * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Scalar* src = in.col(b).data();
    Scalar* dst = out.data() + b * hw * s.channels;
    for (int c = 0; c < s.channels; ++c) {
      for (int p = 0; p < hw; ++p) dst[p * s.channels + c] = src[c * hw + p];
    }
  }
}

template <typename Scalar>
void hwc_to_chw(const Mat<Scalar>& in, ImageShape s, Eigen::Index batch, Mat<Scalar>& out) {
  const int hw = s.plane();
  out.resize(s.size(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Scalar* src = in.data() + b * hw * s.channels;
    Scalar* dst = out.col(b).data();
    for (int c = 0; c < s.channels; ++c) {
      for (int p = 0; p < hw; ++p) dst[c * hw + p] = src[p * s.channels + c];
    }
  }
}

template <typename Scalar>
void im2col(const Node& n, const Mat<Scalar>& in, int batch, Mat<Scalar>& col) {
  const int kkc = n.kernel * n.kernel * n.in_c;
  col.resize(kkc, static_cast<Eigen::Index>(batch) * n.out_h * n.out_w);
  const int row_c = n.kernel * n.in_c;
  Scalar* dst = col.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < n.out_h; ++oy) {
      for (int ox = 0; ox < n.out_w; ++ox) {
        const int x0 = ox * n.stride - n.pad;
        const bool inner_x = x0 >= 0 && x0 + n.kernel <= n.in_w;
        for (int ky = 0; ky < n.kernel; ++ky) {
          const int iy = oy * n.stride - n.pad + ky;
          if (iy < 0 || iy >= n.in_h) {
            std::fill_n(dst, row_c, Scalar(0));
          } else {
            const Scalar* src = in.data() + (static_cast<Eigen::Index>(b * n.in_h + iy) * n.in_w + x0) * n.in_c;
            if (inner_x) {
              // The kernel row is one contiguous run in channel-fastest layout.
              std::copy_n(src, row_c, dst);
            } else {
              for (int kx = 0; kx < n.kernel; ++kx) {
                const int ix = x0 + kx;
                Scalar* d = dst + kx * n.in_c;
                if (ix >= 0 && ix < n.in_w) {
                  std::copy_n(src + kx * n.in_c, n.in_c, d);
                } else {
                  std::fill_n(d, n.in_c, Scalar(0));
                }
              }
            }
          }
          dst += row_c;
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Node& n, const Mat<Scalar>& col, int batch, Mat<Scalar>& din) {
  const int row_c = n.kernel * n.in_c;
  const Scalar* src = col.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < n.out_h; ++oy) {
      for (int ox = 0; ox < n.out_w; ++ox) {
        const int x0 = ox * n.stride - n.pad;
        const bool inner_x = x0 >= 0 && x0 + n.kernel <= n.in_w;
        for (int ky = 0; ky < n.kernel; ++ky) {
          const int iy = oy * n.stride - n.pad + ky;
          if (iy >= 0 && iy < n.in_h) {
            Scalar* dst = din.data() + (static_cast<Eigen::Index>(b * n.in_h + iy) * n.in_w + x0) * n.in_c;
            if (inner_x) {
              for (int j = 0; j < row_c; ++j) dst[j] += src[j];
            } else {
              for (int kx = 0; kx < n.kernel; ++kx) {
                const int ix = x0 + kx;
                if (ix < 0 || ix >= n.in_w) continue;
                for (int c = 0; c < n.in_c; ++c) dst[kx * n.in_c + c] += src[kx * n.in_c + c];
              }
            }
          }
          src += row_c;
        }
      }
    }
  }
}

}  // namespace

Network Network::build(std::string_view architecture_id, ImageShape input, int num_classes) {
  if (num_classes < 1) throw PreconditionError("network needs at least one class");
  if (input.size() <= 0) throw PreconditionError("network needs a non-empty input shape");
  Network net;
  net.architecture_id_ = std::string(architecture_id);
  net.input_ = input;
  net.num_classes_ = num_classes;
  GraphBuilder g(net, input);
  int hidden = 0;
  int width = 0;
  if (architecture_id == "linear") {
    g.linear(g.flatten(0), num_classes);
  } else if (parse_suffix_int(architecture_id, "mlp-", hidden)) {
    const int h = g.relu(g.linear(g.flatten(0), hidden));
    g.linear(h, num_classes);
  } else if (architecture_id == "resnet-mini" || parse_suffix_int(architecture_id, "resnet-mini-w", width)) {
    if (width == 0) width = 16;
    if (input.height % 8 || input.width % 8) throw PreconditionError("resnet-mini needs spatial dims divisible by 8");
    int x = g.maxpool(g.relu(g.conv(0, width, 3, 1)));
    x = g.residual(x);
    x = g.relu(g.conv(x, 2 * width, 3, 2));
    x = g.residual(x);
    x = g.relu(g.conv(x, 4 * width, 3, 2));
    g.linear(g.global_avg_pool(x), num_classes);
  } else {
    throw ValidationError("unknown architecture '" + std::string(architecture_id) + "'");
  }
  return net;
}

Eigen::VectorXf Network::initialize(std::uint64_t seed) const {
  Eigen::VectorXf params = Eigen::VectorXf::Zero(num_params_);
  Rng rng = make_rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (const Node& n : nodes_) {
    if (n.kind != OpKind::kConv && n.kind != OpKind::kLinear) continue;
    const bool is_conv = n.kind == OpKind::kConv;
    const int fan_in = is_conv ? n.kernel * n.kernel * n.in_c : n.in_c;
    const Eigen::Index count = is_conv ? static_cast<Eigen::Index>(n.out_c) * fan_in : static_cast<Eigen::Index>(n.out_c) * n.in_c;
    // He init ahead of ReLUs, LeCun for the logit layer.
    const bool logits = !is_conv && &n == &nodes_.back();
    const float stddev = n.init_scale * std::sqrt((logits ? 1.0f : 2.0f) / static_cast<float>(fan_in));
    for (Eigen::Index i = 0; i < count; ++i) {
      const float z = normal(rng);
      params[n.weight + i] = stddev * z;
    }
  }
  return params;
}

template <typename Scalar>
const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Network::forward(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& params,
    const std::type_identity_t<Eigen::Ref<const Mat<Scalar>>>& batch, WorkspaceT<Scalar>& ws) const {
  if (params.size() != num_params_) throw ShapeMismatchError("parameter vector does not match the manifest");
  if (batch.rows() != input_.size()) throw ShapeMismatchError("input batch does not match the network input shape");
  const int b = static_cast<int>(batch.cols());
  ws.batch = b;
  ws.acts.resize(nodes_.size() + 1);
  ws.cols.resize(nodes_.size());
  ws.argmax.resize(nodes_.size());
  chw_to_hwc<Scalar>(batch, input_, ws.acts[0]);
  // Inputs in [0, 1] are mapped to [-1, 1] before the first layer.
  ws.acts[0].array() = ws.acts[0].array() * Scalar(kInputScale) - Scalar(1);
  const Scalar* p = params.data();

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const Mat<Scalar>& in = ws.acts[static_cast<std::size_t>(n.input)];
    Mat<Scalar>& out = ws.acts[i + 1];
    switch (n.kind) {
      case OpKind::kConv: {
        Mat<Scalar>& col = ws.cols[i];
        im2col<Scalar>(n, in, b, col);
        const int kkc = n.kernel * n.kernel * n.in_c;
        Eigen::Map<const Mat<Scalar>> w(p + n.weight, n.out_c, kkc);
        Eigen::Map<const Vec<Scalar>> bias(p + n.bias, n.out_c);
        out.resize(n.out_c, col.cols());
        out.noalias() = w * col;
        out.colwise() += bias;
        break;
      }
      case OpKind::kRelu:
        out = in.cwiseMax(Scalar(0));
        break;
      case OpKind::kMaxPool: {
        const Eigen::Index cells = static_cast<Eigen::Index>(b) * n.out_h * n.out_w;
        out.resize(n.out_c, cells);
        auto& arg = ws.argmax[i];
        arg.resize(static_cast<std::size_t>(out.size()));
        const int c_n = n.out_c;
        const Scalar* src = in.data();
        for (int bb = 0; bb < b; ++bb) {
          for (int oy = 0; oy < n.out_h; ++oy) {
            for (int ox = 0; ox < n.out_w; ++ox) {
              const Eigen::Index o = (static_cast<Eigen::Index>(bb) * n.out_h + oy) * n.out_w + ox;
              const int base = static_cast<int>(((static_cast<Eigen::Index>(bb) * n.in_h + 2 * oy) * n.in_w + 2 * ox) * c_n);
              const int taps[4] = {base, base + c_n, base + n.in_w * c_n, base + (n.in_w + 1) * c_n};
              Scalar* dst = out.data() + o * c_n;
              int* am = arg.data() + o * c_n;
              for (int c = 0; c < c_n; ++c) {
                dst[c] = src[taps[0] + c];
                am[c] = taps[0] + c;
              }
              for (int t = 1; t < 4; ++t) {
                for (int c = 0; c < c_n; ++c) {
                  const Scalar v = src[taps[t] + c];
                  if (v > dst[c]) {
                    dst[c] = v;
                    am[c] = taps[t] + c;
                  }
                }
              }
            }
          }
        }
        break;
      }
      case OpKind::kAdd:
        out = in + ws.acts[static_cast<std::size_t>(n.input2)];
        break;
      case OpKind::kGlobalAvgPool: {
        const int hw = n.in_h * n.in_w;
        out.resize(n.out_c, b);
        for (int bb = 0; bb < b; ++bb) out.col(bb) = in.middleCols(static_cast<Eigen::Index>(bb) * hw, hw).rowwise().mean();
        break;
      }
      case OpKind::kFlatten:
        out = Eigen::Map<const Mat<Scalar>>(in.data(), n.out_c, b);
        break;
      case OpKind::kLinear: {
        Eigen::Map<const Mat<Scalar>> w(p + n.weight, n.out_c, n.in_c);
        Eigen::Map<const Vec<Scalar>> bias(p + n.bias, n.out_c);
        out.resize(n.out_c, b);
        out.noalias() = w * in;
        out.colwise() += bias;
        break;
      }
    }
  }
  return ws.acts.back();
}

template <typename Scalar>
void Network::backward(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& params,
                       const std::type_identity_t<Mat<Scalar>>& dlogits,
                       WorkspaceT<Scalar>& ws, std::type_identity_t<Vec<Scalar>>* dparams,
                       std::type_identity_t<Mat<Scalar>>* dinput) const {
  const int b = ws.batch;
  if (ws.acts.size() != nodes_.size() + 1) throw PreconditionError("backward called before forward");
  if (dlogits.rows() != num_classes_ || dlogits.cols() != b) throw ShapeMismatchError("dlogits shape mismatch");
  if (dparams) dparams->setZero(num_params_);
  ws.grads.resize(ws.acts.size());
  for (std::size_t i = 0; i < ws.acts.size(); ++i) {
    ws.grads[i].setZero(ws.acts[i].rows(), ws.acts[i].cols());
  }
  ws.grads.back() = dlogits;
  const Scalar* p = params.data();
  Scalar* dp = dparams ? dparams->data() : nullptr;
  const bool need_input_grad = dinput != nullptr;

  for (std::size_t ii = nodes_.size(); ii-- > 0;) {
    const Node& n = nodes_[ii];
    const Mat<Scalar>& dout = ws.grads[ii + 1];
    const Mat<Scalar>& in = ws.acts[static_cast<std::size_t>(n.input)];
    Mat<Scalar>& din = ws.grads[static_cast<std::size_t>(n.input)];
    const bool propagate = n.input != 0 || need_input_grad;
    switch (n.kind) {
      case OpKind::kConv: {
        Mat<Scalar>& col = ws.cols[ii];
        const int kkc = n.kernel * n.kernel * n.in_c;
        if (dp) {
          Eigen::Map<Mat<Scalar>> dw(dp + n.weight, n.out_c, kkc);
          Eigen::Map<Vec<Scalar>> db(dp + n.bias, n.out_c);
          dw.noalias() += dout * col.transpose();
          db += dout.rowwise().sum();
        }
        if (propagate) {
          Eigen::Map<const Mat<Scalar>> w(p + n.weight, n.out_c, kkc);
          col.noalias() = w.transpose() * dout;
          col2im_add<Scalar>(n, col, b, din);
        }
        break;
      }
      case OpKind::kRelu:
        if (propagate) din.array() += (in.array() > Scalar(0)).select(dout.array(), Scalar(0));
        break;
      case OpKind::kMaxPool: {
        if (!propagate) break;
        const auto& arg = ws.argmax[ii];
        const Scalar* src = dout.data();
        Scalar* dst = din.data();
        for (std::size_t j = 0; j < arg.size(); ++j) dst[arg[j]] += src[j];
        break;
      }
      case OpKind::kAdd:
        if (propagate) din += dout;
        if (n.input2 != 0 || need_input_grad) ws.grads[static_cast<std::size_t>(n.input2)] += dout;
        break;
      case OpKind::kGlobalAvgPool: {
        if (!propagate) break;
        const int hw = n.in_h * n.in_w;
        const Scalar scale = Scalar(1) / static_cast<Scalar>(hw);
        for (int bb = 0; bb < b; ++bb) din.middleCols(static_cast<Eigen::Index>(bb) * hw, hw).colwise() += dout.col(bb) * scale;
        break;
      }
      case OpKind::kFlatten:
        if (propagate) {
          Eigen::Map<Mat<Scalar>>(din.data(), n.out_c, b) += dout;
        }
        break;
      case OpKind::kLinear: {
        if (dp) {
          Eigen::Map<Mat<Scalar>> dw(dp + n.weight, n.out_c, n.in_c);
          Eigen::Map<Vec<Scalar>> db(dp + n.bias, n.out_c);
          dw.noalias() += dout * in.transpose();
          db += dout.rowwise().sum();
        }
        if (propagate) {
          Eigen::Map<const Mat<Scalar>> w(p + n.weight, n.out_c, n.in_c);
          din.noalias() += w.transpose() * dout;
        }
        break;
      }
    }
  }
  if (dinput) {
    hwc_to_chw<Scalar>(ws.grads[0], input_, b, *dinput);
    *dinput *= Scalar(kInputScale);
  }
}

template const Eigen::MatrixXf& Network::forward<float>(const Eigen::VectorXf&,
                                                        const Eigen::Ref<const Eigen::MatrixXf>&,
                                                        WorkspaceT<float>&) const;
template const Eigen::MatrixXd& Network::forward<double>(const Eigen::VectorXd&,
                                                         const Eigen::Ref<const Eigen::MatrixXd>&,
                                                         WorkspaceT<double>&) const;
template void Network::backward<float>(const Eigen::VectorXf&, const Eigen::MatrixXf&, WorkspaceT<float>&,
                                       Eigen::VectorXf*, Eigen::MatrixXf*) const;
template void Network::backward<double>(const Eigen::VectorXd&, const Eigen::MatrixXd&, WorkspaceT<double>&,
                                        Eigen::VectorXd*, Eigen::MatrixXd*) const;

}  // namespace dovkit::nn
