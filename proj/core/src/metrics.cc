#include "fedsig/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsig/error.h"
#include "fedsig/json_io.h"

namespace fedsig {

ScoreSet score_batch(const ModelConfig& config, const ModelParams& params,
                     std::span<const ProcessedSignature> data,
                     std::size_t chunk_size) {
  ScoreSet scores;
  scores.samples.reserve(data.size());
  chunk_size = std::max<std::size_t>(chunk_size, 1);
  for (std::size_t start = 0; start < data.size(); start += chunk_size) {
    const auto chunk =
        data.subspan(start, std::min(chunk_size, data.size() - start));
    const Batch batch = make_batch(chunk);
    const auto fwd = forward(config, params, batch, Mode::kEval);
    const Tensor probs = softmax(fwd.logits);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      scores.samples.push_back({probs.at(i, class_index(Label::kGenuine)),
                                chunk[i].label, chunk[i].user_id,
                                chunk[i].sample_index});
    }
  }
  return scores;
}

RocCurve roc_and_eer(const ScoreSet& scores, EerMethod method) {
  std::vector<double> genuine, forged;
  for (const auto& s : scores.samples) {
    (s.label == Label::kGenuine ? genuine : forged).push_back(s.score);
  }
  if (genuine.empty() || forged.empty()) {
    throw DataError("ROC/EER needs both genuine and forged scores");
  }
  std::sort(genuine.begin(), genuine.end());
  std::sort(forged.begin(), forged.end());
  std::vector<double> distinct;
  distinct.reserve(genuine.size() + forged.size());
  std::merge(genuine.begin(), genuine.end(), forged.begin(), forged.end(),
             std::back_inserter(distinct));
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  const double n_gen = static_cast<double>(genuine.size());
  const double n_forg = static_cast<double>(forged.size());
  // Rates for the rule "accept iff score >= cut".
  auto rates_at = [&](double cut, double threshold) {
    const auto forged_accepted = static_cast<double>(
        forged.end() - std::lower_bound(forged.begin(), forged.end(), cut));
    const auto genuine_rejected = static_cast<double>(
        std::lower_bound(genuine.begin(), genuine.end(), cut) - genuine.begin());
    return RocPoint{threshold, forged_accepted / n_forg,
                    genuine_rejected / n_gen};
  };

  RocCurve curve;
  const double lo = distinct.front() - 1.0;
  const double hi = distinct.back() + 1.0;
  curve.points.push_back(rates_at(distinct.front(), lo));
  for (std::size_t i = 1; i < distinct.size(); ++i) {
    double mid = distinct[i - 1] + (distinct[i] - distinct[i - 1]) / 2.0;
    if (mid <= distinct[i - 1]) mid = distinct[i];
    curve.points.push_back(rates_at(distinct[i], mid));
  }
  curve.points.push_back(
      RocPoint{hi, 0.0, 1.0});

  if (method == EerMethod::kDiscrete) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      const auto& p = curve.points[i];
      const auto& b = curve.points[best];
      if (std::abs(p.far - p.frr) < std::abs(b.far - b.frr)) best = i;
    }
    curve.eer = (curve.points[best].far + curve.points[best].frr) / 2.0;
    curve.eer_threshold = curve.points[best].threshold;
  } else {
    // FAR - FRR runs from +1 at the low sentinel to -1 at the high one.
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      const auto& p = curve.points[i];
      const double d = p.far - p.frr;
      if (d == 0.0) {
        curve.eer = p.far;
        curve.eer_threshold = p.threshold;
        break;
      }
      const auto& q = curve.points[i + 1];
      const double dn = q.far - q.frr;
      if (d > 0.0 && dn < 0.0) {
        const double alpha = d / (d - dn);
        curve.eer = p.far + alpha * (q.far - p.far);
        curve.eer_threshold = p.threshold + alpha * (q.threshold - p.threshold);
        break;
      }
    }
  }
  curve.accuracy_at_half = accuracy(scores, 0.5);
  curve.accuracy_at_eer = accuracy(scores, curve.eer_threshold);
  return curve;
}

double accuracy(const ScoreSet& scores, double threshold) {
  if (scores.empty()) throw DataError("accuracy of an empty score set");
  std::size_t correct = 0;
  for (const auto& s : scores.samples) {
    const bool accept = s.score >= threshold;
    if (accept == (s.label == Label::kGenuine)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

InstanceSummary summarize_instances(std::span<const double> values) {
  if (values.empty()) throw DataError("cannot summarize zero instances");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  auto quantile = [&](double p) {
    const double h = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return values[order[lo]] + frac * (values[order[hi]] - values[order[lo]]);
  };
  InstanceSummary s;
  s.count = values.size();
  s.min = values[order.front()];
  s.max = values[order.back()];
  s.median = quantile(0.5);
  s.q1 = quantile(0.25);
  s.q3 = quantile(0.75);
  s.median_index = order[(values.size() - 1) / 2];
  return s;
}

std::string score_set_csv(const ScoreSet& scores) {
  std::string out = "user_id,label,score\n";
  for (const auto& s : scores.samples) {
    out += std::to_string(s.user_id) + "," + std::string(label_name(s.label)) +
           "," + format_double(s.score) + "\n";
  }
  return out;
}

std::string roc_curve_csv(const RocCurve& curve) {
  std::string out = "threshold,far,frr\n";
  for (const auto& p : curve.points) {
    out += format_double(p.threshold) + "," + format_double(p.far) + "," +
           format_double(p.frr) + "\n";
  }
  return out;
}

nlohmann::json summary_json(const InstanceSummary& summary) {
  return {{"median", summary.median}, {"q1", summary.q1},
          {"q3", summary.q3},         {"min", summary.min},
          {"max", summary.max},       {"count", summary.count},
          {"median_index", summary.median_index}};
}

}  // namespace fedsig
