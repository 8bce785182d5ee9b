#pragma once

#include <future>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "coupnet/boosting.hpp"
#include "coupnet/error.hpp"
#include "coupnet/features.hpp"

namespace coupnet {

inline constexpr int kHybridFormatVersion = 1;

// Two single-layer ensembles mixed by alpha, the weight on the social score.
class HybridClassifier {
 public:
  HybridClassifier(BoostedEnsemble social_model, BoostedEnsemble behavioral_model, double alpha)
      : social_(std::move(social_model)), behavioral_(std::move(behavioral_model)), alpha_(alpha) {
    if (!(alpha_ >= 0.0 && alpha_ <= 1.0)) {
      throw ValidationError("alpha must lie in [0, 1], got " + text::format_double(alpha_));
    }
    if (social_.arity() != kLayerWidth || behavioral_.arity() != kLayerWidth) {
      throw ValidationError("hybrid sub-models must each take exactly 5 features");
    }
  }

  const BoostedEnsemble& social_model() const noexcept { return social_; }
  const BoostedEnsemble& behavioral_model() const noexcept { return behavioral_; }
  double alpha() const noexcept { return alpha_; }

  HybridClassifier with_alpha(double alpha) const { return HybridClassifier(social_, behavioral_, alpha); }

  double score(const FeatureVector& x) const {
    return alpha_ * social_.score(x.social()) + (1.0 - alpha_) * behavioral_.score(x.behavioral());
  }
  int label(const FeatureVector& x) const { return score(x) > 0.0 ? 1 : 0; }

  bool operator==(const HybridClassifier&) const = default;

 private:
  BoostedEnsemble social_;
  BoostedEnsemble behavioral_;
  double alpha_;
};

inline double hybrid_score(const HybridClassifier& h, const FeatureVector& x) { return h.score(x); }
inline int hybrid_label(const HybridClassifier& h, const FeatureVector& x) { return h.label(x); }

// The five columns of one layer for the given rows.
inline LabeledDataset layer_dataset(const FeatureMatrix& m, std::span<const int> labels,
                                    std::span<const std::size_t> rows, Layer layer) {
  if (labels.size() != m.size()) throw ValidationError("label count does not match feature rows");
  LabeledDataset d(kLayerWidth);
  for (std::size_t r : rows) {
    const auto& row = m.rows.at(r);
    d.add(layer == Layer::social ? row.social() : row.behavioral(), labels[r]);
  }
  return d;
}

struct HybridModels {
  BoostedEnsemble social;
  BoostedEnsemble behavioral;
};

// Trains both single-layer ensembles on identical rows. With workers > 1 the
// two run concurrently; each is deterministic so completion order is irrelevant.
inline HybridModels train_layer_models(const FeatureMatrix& m, std::span<const int> labels,
                                       std::span<const std::size_t> train_rows, const BoostingParams& params,
                                       unsigned workers = 1) {
  if (train_rows.empty()) throw ValidationError("no training rows");
  const auto social_data = layer_dataset(m, labels, train_rows, Layer::social);
  const auto behavioral_data = layer_dataset(m, labels, train_rows, Layer::behavioral);
  if (workers > 1) {
    auto social = std::async(std::launch::async, [&] { return train_boosted(social_data, params); });
    auto behavioral = train_boosted(behavioral_data, params);
    return {social.get(), std::move(behavioral)};
  }
  auto social = train_boosted(social_data, params);
  return {std::move(social), train_boosted(behavioral_data, params)};
}

inline HybridClassifier train_hybrid(const FeatureMatrix& m, std::span<const int> labels,
                                     std::span<const std::size_t> train_rows, double alpha,
                                     const BoostingParams& params, unsigned workers = 1) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("alpha must lie in [0, 1], got " + text::format_double(alpha));
  }
  auto models = train_layer_models(m, labels, train_rows, params, workers);
  return HybridClassifier(std::move(models.social), std::move(models.behavioral), alpha);
}

inline nlohmann::json hybrid_to_json(const HybridClassifier& h) {
  return {{"format", "coupnet.hybrid_classifier"},
          {"format_version", kHybridFormatVersion},
          {"alpha", h.alpha()},
          {"social_model", ensemble_to_json(h.social_model())},
          {"behavioral_model", ensemble_to_json(h.behavioral_model())}};
}

inline HybridClassifier hybrid_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "coupnet.hybrid_classifier") throw ValidationError("not a hybrid classifier file");
  if (j.at("format_version").get<int>() != kHybridFormatVersion) {
    throw ValidationError("unsupported hybrid format_version " + j.at("format_version").dump());
  }
  return HybridClassifier(ensemble_from_json(j.at("social_model")), ensemble_from_json(j.at("behavioral_model")),
                          j.at("alpha").get<double>());
}

}  // namespace coupnet
