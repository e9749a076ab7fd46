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

#include "fcil/protomodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fcil {

std::string to_string(Activation act) {
  return act == Activation::kTanh ? "tanh" : "identity";
}

Activation activation_from_string(const std::string& text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "identity") return Activation::kIdentity;
  fail(ErrorCode::kInvalidArgument, "unknown activation '" + text + "' (expected tanh or identity)");
}

FrozenBackbone::FrozenBackbone(std::vector<AffineLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
  require(!layers_.empty(), ErrorCode::kInvalidArgument, "backbone needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const AffineLayer& layer = layers_[l];
    require(layer.bias.size() == layer.out_dim(), ErrorCode::kShapeMismatch,
            "layer " + std::to_string(l) + " bias has length " +
                std::to_string(layer.bias.size()) + " but weight is " +
                layer.weight.shape_string());
    if (l > 0) {
      require(layers_[l - 1].out_dim() == layer.in_dim(), ErrorCode::kShapeMismatch,
              "layer " + std::to_string(l) + " expects input width " +
                  std::to_string(layer.in_dim()) + " but previous layer emits " +
                  std::to_string(layers_[l - 1].out_dim()));
    }
  }
}

FrozenBackbone FrozenBackbone::random(std::span<const std::size_t> dims, Activation activation,
                                      double gain, RngStream& rng) {
  require(dims.size() >= 2, ErrorCode::kInvalidArgument, "backbone needs input and output widths");
  std::vector<AffineLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    require(dims[l] >= 1 && dims[l + 1] >= 1, ErrorCode::kInvalidArgument,
            "backbone widths must be positive");
    const double stddev = gain / std::sqrt(static_cast<double>(dims[l]));
    layers.push_back({gaussian_matrix(dims[l + 1], dims[l], 0.0, stddev, rng),
                      Vector(dims[l + 1], 0.0)});
  }
  return FrozenBackbone(std::move(layers), activation);
}

const Vector& PrototypeSet::at(ClassId c) const {
  const auto it = protos_.find(c);
  if (it == protos_.end()) fail(ErrorCode::kInvalidArgument, "missing prototype for class " + std::to_string(c));
  return it->second;
}

Vector& PrototypeSet::at(ClassId c) {
  const auto it = protos_.find(c);
  if (it == protos_.end()) fail(ErrorCode::kInvalidArgument, "missing prototype for class " + std::to_string(c));
  return it->second;
}

void PrototypeSet::add(ClassId c, Vector proto, bool trainable) {
  require(!contains(c), ErrorCode::kInvalidArgument,
          "class " + std::to_string(c) + " already has a prototype");
  require(proto.size() == dim_, ErrorCode::kShapeMismatch,
          "prototype for class " + std::to_string(c) + " has dimension " +
              std::to_string(proto.size()) + ", expected " + std::to_string(dim_));
  protos_.emplace(c, std::move(proto));
  if (trainable) trainable_.insert(c);
}

void PrototypeSet::set(ClassId c, Vector proto) {
  require(proto.size() == dim_, ErrorCode::kShapeMismatch, "prototype dimension mismatch");
  at(c) = std::move(proto);
}

void PrototypeSet::set_trainable(ClassId c, bool on) {
  at(c);
  if (on) {
    trainable_.insert(c);
  } else {
    trainable_.erase(c);
  }
}

std::vector<ClassId> PrototypeSet::classes() const {
  std::vector<ClassId> out;
  out.reserve(protos_.size());
  for (const auto& [c, _] : protos_) out.push_back(c);
  return out;
}

void HyperParams::validate() const {
  require(delta > 0.0, ErrorCode::kConfig, "delta must be > 0");
  require(lambda >= 0.0, ErrorCode::kConfig, "lambda must be >= 0");
  require(gamma >= 0.0, ErrorCode::kConfig, "gamma must be >= 0");
  require(eta > 0.0, ErrorCode::kConfig, "eta must be > 0");
  require(rank >= 1, ErrorCode::kConfig, "rank must be >= 1");
  require(lr_prototypes >= 0.0, ErrorCode::kConfig, "lr_prototypes must be >= 0");
  require(lr_lora >= 0.0, ErrorCode::kConfig, "lr_lora must be >= 0");
  require(local_epochs >= 1, ErrorCode::kConfig, "local_epochs must be >= 1");
  require(rounds >= 1, ErrorCode::kConfig, "rounds must be >= 1");
  require(batch_size >= 1, ErrorCode::kConfig, "batch_size must be >= 1");
}

std::vector<AttachmentPoint> ModelState::attachments() const {
  std::vector<AttachmentPoint> out;
  for (const auto& l : ledgers) out.push_back(l.attachment());
  return out;
}

ModelState make_model(std::shared_ptr<const FrozenBackbone> backbone,
                      std::span<const AttachmentPoint> attachments, std::size_t rank,
                      double init_stddev, MergeMode mode, RngStream& rng) {
  require(backbone != nullptr, ErrorCode::kInvalidArgument, "model needs a backbone");
  std::vector<AttachmentPoint> sorted(attachments.begin(), attachments.end());
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
          ErrorCode::kInvalidArgument, "duplicate attachment point");
  ModelState model;
  model.merge_mode = mode;
  model.prototypes = PrototypeSet(backbone->output_dim());
  for (const auto& ap : sorted) {
    require(ap.layer < backbone->layer_count(), ErrorCode::kInvalidArgument,
            "attachment layer " + std::to_string(ap.layer) + " does not exist (backbone has " +
                std::to_string(backbone->layer_count()) + " layers)");
    const AffineLayer& layer = backbone->layer(ap.layer);
    model.ledgers.emplace_back(ap, new_adapter(layer.out_dim(), layer.in_dim(), rank, 1,
                                               init_stddev, rng));
  }
  model.backbone = std::move(backbone);
  return model;
}

namespace {

// The weight delta of one attached layer as a list of low-rank terms
// sum_j A_j B_j, with one term designated as the owner of the active
// adapter's gradient.
struct ResolvedLedger {
  std::size_t layer = 0;
  std::vector<Matrix> term_a;
  std::vector<Matrix> term_b;
  std::size_t grad_term = 0;
};

std::vector<ResolvedLedger> resolve(const FrozenBackbone& backbone,
                                    std::span<const LoraLedger> ledgers, MergeMode mode) {
  std::vector<ResolvedLedger> out;
  out.reserve(ledgers.size());
  for (const auto& ledger : ledgers) {
    const std::size_t layer = ledger.attachment().layer;
    require(layer < backbone.layer_count(), ErrorCode::kShapeMismatch,
            "ledger attached to missing layer " + std::to_string(layer));
    const AffineLayer& affine = backbone.layer(layer);
    require(ledger.out_dim() == affine.out_dim() && ledger.in_dim() == affine.in_dim(),
            ErrorCode::kShapeMismatch,
            "ledger delta " + std::to_string(ledger.out_dim()) + "x" +
                std::to_string(ledger.in_dim()) + " does not match layer " +
                std::to_string(layer) + " weight " + affine.weight.shape_string());
    ResolvedLedger r;
    r.layer = layer;
    switch (mode) {
      case MergeMode::kSum:
        r.term_a.push_back(ledger.sum_a());
        r.term_b.push_back(ledger.sum_b());
        break;
      case MergeMode::kConcat:
        for (const LoraAdapter* s : ledger.stages()) {
          r.term_a.push_back(s->a);
          r.term_b.push_back(s->b);
        }
        r.grad_term = r.term_a.size() - 1;
        break;
      case MergeMode::kActiveOnly:
        r.term_a.push_back(ledger.active().a);
        r.term_b.push_back(ledger.active().b);
        break;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// Per-sample activations kept for the backward pass.
struct Trace {
  std::vector<Vector> inputs;                 // h_l fed into layer l
  std::vector<std::vector<Vector>> low_rank;  // per resolved ledger: B_j h per term
  Vector features;
};

class Network {
 public:
  Network(const FrozenBackbone& backbone, std::span<const LoraLedger> ledgers, MergeMode mode)
      : backbone_(backbone), resolved_(resolve(backbone, ledgers, mode)),
        by_layer_(backbone.layer_count(), kNone) {
    for (std::size_t i = 0; i < resolved_.size(); ++i) {
      require(by_layer_[resolved_[i].layer] == kNone, ErrorCode::kInvalidArgument,
              "two ledgers attached to layer " + std::to_string(resolved_[i].layer));
      by_layer_[resolved_[i].layer] = i;
    }
  }

  Vector forward(std::span<const double> x, Trace* trace) const {
    require(x.size() == backbone_.input_dim(), ErrorCode::kShapeMismatch,
            "input has dimension " + std::to_string(x.size()) + ", backbone expects " +
                std::to_string(backbone_.input_dim()));
    if (trace) {
      trace->inputs.clear();
      trace->low_rank.assign(resolved_.size(), {});
    }
    Vector h(x.begin(), x.end());
    const std::size_t depth = backbone_.layer_count();
    for (std::size_t l = 0; l < depth; ++l) {
      const AffineLayer& layer = backbone_.layer(l);
      Vector z = matvec(layer.weight, h);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
      if (const std::size_t li = by_layer_[l]; li != kNone) {
        const ResolvedLedger& r = resolved_[li];
        for (std::size_t j = 0; j < r.term_a.size(); ++j) {
          Vector u = matvec(r.term_b[j], h);
          const Vector contrib = matvec(r.term_a[j], u);
          for (std::size_t i = 0; i < z.size(); ++i) z[i] += contrib[i];
          if (trace) trace->low_rank[li].push_back(std::move(u));
        }
      }
      if (trace) trace->inputs.push_back(std::move(h));
      if (l + 1 < depth && backbone_.activation() == Activation::kTanh) {
        for (double& v : z) v = std::tanh(v);
      }
      h = std::move(z);
    }
    if (trace) trace->features = h;
    return h;
  }

  // Accumulates adapter gradients given dL/df for one traced sample.
  void backward(const Trace& trace, Vector grad_out, std::vector<AdapterGrad>& grads) const {
    const std::size_t depth = backbone_.layer_count();
    for (std::size_t l = depth; l-- > 0;) {
      const AffineLayer& layer = backbone_.layer(l);
      const Vector& h = trace.inputs[l];
      Vector grad_h = matvec_transposed(layer.weight, grad_out);
      if (const std::size_t li = by_layer_[l]; li != kNone) {
        const ResolvedLedger& r = resolved_[li];
        for (std::size_t j = 0; j < r.term_a.size(); ++j) {
          const Vector at_g = matvec_transposed(r.term_a[j], grad_out);
          const Vector back = matvec_transposed(r.term_b[j], at_g);
          for (std::size_t i = 0; i < grad_h.size(); ++i) grad_h[i] += back[i];
          if (j == r.grad_term) {
            add_outer(grads[li].a, grad_out, trace.low_rank[li][j]);
            add_outer(grads[li].b, at_g, h);
          }
        }
      }
      if (l == 0) break;
      if (backbone_.activation() == Activation::kTanh) {
        // h is tanh of the previous pre-activation.
        for (std::size_t i = 0; i < grad_h.size(); ++i) grad_h[i] *= 1.0 - h[i] * h[i];
      }
      grad_out = std::move(grad_h);
    }
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  const FrozenBackbone& backbone_;
  std::vector<ResolvedLedger> resolved_;
  std::vector<std::size_t> by_layer_;
};

std::vector<double> sq_dists(std::span<const double> f, const PrototypeSet& protos,
                             std::span<const ClassId> class_subset) {
  require(!class_subset.empty(), ErrorCode::kInvalidArgument, "empty class subset");
  std::vector<double> d(class_subset.size());
  for (std::size_t j = 0; j < class_subset.size(); ++j) d[j] = sq_dist(f, protos.at(class_subset[j]));
  return d;
}

std::size_t index_of(std::span<const ClassId> class_subset, ClassId y) {
  const auto it = std::find(class_subset.begin(), class_subset.end(), y);
  require(it != class_subset.end(), ErrorCode::kInvalidArgument,
          "label " + std::to_string(y) + " is not in the class subset");
  return static_cast<std::size_t>(it - class_subset.begin());
}

double ortho_total(const ModelState& model) {
  double total = 0.0;
  for (const auto& ledger : model.ledgers) {
    const auto prev = ledger.frozen_a();
    total += ortho_reg(prev, ledger.active().a);
  }
  return total;
}

}  // namespace

Vector forward_features(const FrozenBackbone& backbone, std::span<const LoraLedger> ledgers,
                        MergeMode mode, std::span<const double> x) {
  return Network(backbone, ledgers, mode).forward(x, nullptr);
}

Vector forward_features(const ModelState& model, std::span<const double> x) {
  return forward_features(*model.backbone, model.ledgers, model.merge_mode, x);
}

Vector dce_probs(std::span<const double> f, const PrototypeSet& protos, double delta,
                 std::span<const ClassId> class_subset) {
  // softmax of -delta * d_j
  return softmax_temp(sq_dists(f, protos, class_subset), -delta);
}

double loss_dce(std::span<const double> f, ClassId y, const PrototypeSet& protos, double delta,
                std::span<const ClassId> class_subset) {
  const std::size_t yi = index_of(class_subset, y);
  const auto d = sq_dists(f, protos, class_subset);
  // -log p_y = delta d_y + log sum_j exp(-delta d_j), via log-sum-exp.
  double top = -std::numeric_limits<double>::infinity();
  for (double dj : d) top = std::max(top, -delta * dj);
  double s = 0.0;
  for (double dj : d) s += std::exp(-delta * dj - top);
  return std::max(0.0, delta * d[yi] + top + std::log(s));
}

double loss_pl(std::span<const double> f, ClassId y, const PrototypeSet& protos) {
  return sq_dist(f, protos.at(y));
}

ClassId predict(std::span<const double> f, const PrototypeSet& protos,
                std::span<const ClassId> class_subset) {
  require(!class_subset.empty(), ErrorCode::kInvalidArgument, "predict: empty class subset");
  ClassId best = class_subset.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (ClassId c : class_subset) {
    const double d = sq_dist(f, protos.at(c));
    if (d < best_d || (d == best_d && c < best)) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

LossBreakdown total_loss(std::span<const LabeledSample> batch, const ModelState& model,
                         const HyperParams& hp, std::span<const ClassId> class_subset) {
  require(!batch.empty(), ErrorCode::kInvalidArgument, "total_loss: empty batch");
  const Network net(*model.backbone, model.ledgers, model.merge_mode);
  LossBreakdown out;
  for (const auto& s : batch) {
    const Vector f = net.forward(s.features, nullptr);
    out.dce += loss_dce(f, s.label, model.prototypes, hp.delta, class_subset);
    out.pl += loss_pl(f, s.label, model.prototypes);
  }
  const double n = static_cast<double>(batch.size());
  out.dce /= n;
  out.pl /= n;
  out.ort = ortho_total(model);
  out.total = out.dce + hp.lambda * out.pl + hp.gamma * out.ort;
  return out;
}

LossBreakdown loss_and_grads(std::span<const LabeledSample> batch, const ModelState& model,
                             const HyperParams& hp, std::span<const ClassId> class_subset,
                             Gradients& grads) {
  require(!batch.empty(), ErrorCode::kInvalidArgument, "loss_and_grads: empty batch");
  const Network net(*model.backbone, model.ledgers, model.merge_mode);
  const PrototypeSet& protos = model.prototypes;
  const double n = static_cast<double>(batch.size());

  grads.adapters.clear();
  for (const auto& ledger : model.ledgers) {
    grads.adapters.push_back({Matrix(ledger.active().a.rows(), ledger.active().a.cols()),
                              Matrix(ledger.active().b.rows(), ledger.active().b.cols())});
  }
  grads.prototypes.clear();
  for (ClassId c : class_subset) {
    if (protos.trainable(c)) grads.prototypes[c] = Vector(protos.dim(), 0.0);
  }

  LossBreakdown out;
  Trace trace;
  for (const auto& s : batch) {
    const std::size_t yi = index_of(class_subset, s.label);
    const Vector f = net.forward(s.features, &trace);
    const auto d = sq_dists(f, protos, class_subset);
    const Vector p = softmax_temp(d, -hp.delta);
    out.dce += loss_dce(f, s.label, protos, hp.delta, class_subset);
    out.pl += d[yi];

    Vector grad_f(f.size(), 0.0);
    for (std::size_t j = 0; j < class_subset.size(); ++j) {
      const Vector& m = protos.at(class_subset[j]);
      // dce: 2 delta (1[j=y] - p_j)(f - m_j); pl adds 2 lambda (f - m_y).
      double coef = 2.0 * hp.delta * ((j == yi ? 1.0 : 0.0) - p[j]);
      if (j == yi) coef += 2.0 * hp.lambda;
      if (coef == 0.0) continue;
      const double scaled = coef / n;
      for (std::size_t i = 0; i < f.size(); ++i) grad_f[i] += scaled * (f[i] - m[i]);
      if (auto it = grads.prototypes.find(class_subset[j]); it != grads.prototypes.end()) {
        for (std::size_t i = 0; i < f.size(); ++i) it->second[i] -= scaled * (f[i] - m[i]);
      }
    }
    net.backward(trace, std::move(grad_f), grads.adapters);
  }
  out.dce /= n;
  out.pl /= n;

  for (std::size_t li = 0; li < model.ledgers.size(); ++li) {
    const auto& ledger = model.ledgers[li];
    const auto prev = ledger.frozen_a();
    if (prev.empty()) continue;
    out.ort += ortho_reg(prev, ledger.active().a);
    if (hp.gamma != 0.0) grads.adapters[li].a += ortho_reg_grad(prev, ledger.active().a) * hp.gamma;
  }
  out.total = out.dce + hp.lambda * out.pl + hp.gamma * out.ort;
  return out;
}

}  // namespace fcil
