/*
 * Copyright 2026 The fcilsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fcil/lora.hpp"
#include "fcil/numkit.hpp"
#include "fcil/sample.hpp"

namespace fcil {

enum class Activation { kTanh, kIdentity };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& text);

// y = weight * x + bias; weight is (out x in).
struct AffineLayer {
  Matrix weight;
  Vector bias;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const AffineLayer&, const AffineLayer&) = default;
};

// Fixed affine stack with the activation applied between layers (not after
// the last one). Immutable once built.
class FrozenBackbone {
 public:
  FrozenBackbone(std::vector<AffineLayer> layers, Activation activation);

  // Layer l maps dims[l] -> dims[l+1]; weights ~ N(0, gain^2 / fan_in), zero bias.
  static FrozenBackbone random(std::span<const std::size_t> dims, Activation activation,
                               double gain, RngStream& rng);

  std::size_t input_dim() const noexcept { return layers_.front().in_dim(); }
  std::size_t output_dim() const noexcept { return layers_.back().out_dim(); }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const AffineLayer& layer(std::size_t i) const { return layers_.at(i); }
  const std::vector<AffineLayer>& layers() const noexcept { return layers_; }
  Activation activation() const noexcept { return activation_; }

  friend bool operator==(const FrozenBackbone&, const FrozenBackbone&) = default;

 private:
  std::vector<AffineLayer> layers_;
  Activation activation_;
};

// One prototype per class; doubles as the classifier.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  explicit PrototypeSet(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return protos_.size(); }
  bool contains(ClassId c) const { return protos_.count(c) != 0; }
  const Vector& at(ClassId c) const;
  Vector& at(ClassId c);
  void add(ClassId c, Vector proto, bool trainable);
  void set(ClassId c, Vector proto);
  bool trainable(ClassId c) const { return trainable_.count(c) != 0; }
  void set_trainable(ClassId c, bool on);
  void freeze_all() { trainable_.clear(); }
  std::vector<ClassId> classes() const;
  const std::map<ClassId, Vector>& entries() const noexcept { return protos_; }
  const std::set<ClassId>& trainable_set() const noexcept { return trainable_; }

  friend bool operator==(const PrototypeSet&, const PrototypeSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::map<ClassId, Vector> protos_;
  std::set<ClassId> trainable_;
};

struct HyperParams {
  double delta = 1.0;    // distance softmax temperature
  double lambda = 0.001; // prototype-pull weight
  double gamma = 0.5;    // orthogonality weight
  double eta = 0.2;      // re-weight softmax temperature
  std::size_t rank = 4;
  double lr_prototypes = 2e-3;
  double lr_lora = 1e-5;
  std::size_t local_epochs = 5;
  std::size_t rounds = 30;
  std::size_t batch_size = 64;

  void validate() const;
};

struct ModelState {
  std::shared_ptr<const FrozenBackbone> backbone;
  std::vector<LoraLedger> ledgers;  // ascending attachment order
  PrototypeSet prototypes;
  MergeMode merge_mode = MergeMode::kSum;

  std::vector<AttachmentPoint> attachments() const;
};

// Builds a model with one fresh stage-1 ledger per attachment point.
ModelState make_model(std::shared_ptr<const FrozenBackbone> backbone,
                      std::span<const AttachmentPoint> attachments, std::size_t rank,
                      double init_stddev, MergeMode mode, RngStream& rng);

Vector forward_features(const FrozenBackbone& backbone, std::span<const LoraLedger> ledgers,
                        MergeMode mode, std::span<const double> x);
Vector forward_features(const ModelState& model, std::span<const double> x);

Vector dce_probs(std::span<const double> f, const PrototypeSet& protos, double delta,
                 std::span<const ClassId> class_subset);
double loss_dce(std::span<const double> f, ClassId y, const PrototypeSet& protos, double delta,
                std::span<const ClassId> class_subset);
double loss_pl(std::span<const double> f, ClassId y, const PrototypeSet& protos);

// Nearest prototype; ties go to the smallest class id.
ClassId predict(std::span<const double> f, const PrototypeSet& protos,
                std::span<const ClassId> class_subset);

struct LossBreakdown {
  double dce = 0.0;  // batch mean
  double pl = 0.0;   // batch mean
  double ort = 0.0;  // summed over attachments, once per batch
  double total = 0.0;
};

struct AdapterGrad {
  Matrix a;
  Matrix b;
};

// Gradients of the total loss w.r.t. the trainable parameters.
struct Gradients {
  std::vector<AdapterGrad> adapters;  // aligned with ModelState::ledgers
  std::map<ClassId, Vector> prototypes;
};

LossBreakdown total_loss(std::span<const LabeledSample> batch, const ModelState& model,
                         const HyperParams& hp, std::span<const ClassId> class_subset);

LossBreakdown loss_and_grads(std::span<const LabeledSample> batch, const ModelState& model,
                             const HyperParams& hp, std::span<const ClassId> class_subset,
                             Gradients& grads);

}  // namespace fcil
