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

#pragma once

#include "dovkit/data/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace dovkit::nn {

// One named tensor inside the flat parameter vector.
struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;

  bool operator==(const ParamEntry&) const = default;
};
using ParamManifest = std::vector<ParamEntry>;

enum class OpKind { kConv, kRelu, kMaxPool, kAdd, kGlobalAvgPool, kFlatten, kLinear };

// A node of the feed-forward graph. Activation 0 is the network input; node i
// writes activation i + 1 and reads `input` (and `input2` for kAdd).
struct Node {
  OpKind kind = OpKind::kRelu;
  int input = 0;
  int input2 = -1;
  int in_c = 0, in_h = 1, in_w = 1;
  int out_c = 0, out_h = 1, out_w = 1;
  int kernel = 0, stride = 1, pad = 0;
  Eigen::Index weight = -1;
  Eigen::Index bias = -1;
  float init_scale = 1.0f;
};

// Scratch buffers for one forward/backward pass. Activations are stored
// channel-fastest: a C x H x W map for a batch of B is a C x (B*H*W) matrix.
template <typename Scalar>
struct WorkspaceT {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  int batch = 0;
  std::vector<Mat> acts;
  std::vector<Mat> grads;
  std::vector<Mat> cols;
  std::vector<std::vector<int>> argmax;
};
using Workspace = WorkspaceT<float>;

// A parameter-free description of a network. Parameters live in a separate
// flat vector laid out according to manifest(), so interpolation, averaging
// and optimizer updates are plain vector arithmetic.
class Network {
 public:
  // Supported ids: "linear", "mlp-<hidden>", "resnet-mini" and
  // "resnet-mini-w<width>".
  static Network build(std::string_view architecture_id, ImageShape input, int num_classes);

  const std::string& architecture_id() const { return architecture_id_; }
  ImageShape input_shape() const { return input_; }
  int num_classes() const { return num_classes_; }
  const ParamManifest& manifest() const { return manifest_; }
  Eigen::Index num_params() const { return num_params_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  Eigen::VectorXf initialize(std::uint64_t seed) const;

  // batch: input_shape().size() x B, CHW columns. Returns K x B logits, which
  // stay valid until the next forward on `ws`. Instantiated for float (all
  // production paths) and double (gradient checks).
  template <typename Scalar>
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& forward(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& params,
      const std::type_identity_t<Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>>& batch,
      WorkspaceT<Scalar>& ws) const;

  // Back-propagates dL/dlogits through the last forward on `ws`. Either output
  // may be null; `dparams` is overwritten, `dinput` is returned in CHW columns.
  template <typename Scalar>
  void backward(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& params,
                const std::type_identity_t<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& dlogits,
                WorkspaceT<Scalar>& ws,
                std::type_identity_t<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>* dparams,
                std::type_identity_t<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>* dinput) const;

 private:
  std::string architecture_id_;
  ImageShape input_;
  int num_classes_ = 0;
  std::vector<Node> nodes_;
  ParamManifest manifest_;
  Eigen::Index num_params_ = 0;

  friend class GraphBuilder;
};

}  // namespace dovkit::nn
