#pragma once

// Verification metrics. Decision rule throughout: predict Genuine when
// score >= threshold (ties are acceptances).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsig/dataset.h"
#include "fedsig/model.h"

namespace fedsig {

struct ScoredSample {
  double score = 0.0;  // softmax probability of Genuine
  Label label = Label::kGenuine;
  int user_id = 0;
  int sample_index = 0;
};

struct ScoreSet {
  std::vector<ScoredSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// Eval-mode scores, computed in chunks of at most chunk_size signatures.
ScoreSet score_batch(const ModelConfig& config, const ModelParams& params,
                     std::span<const ProcessedSignature> data,
                     std::size_t chunk_size = 128);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // forged with score >= threshold
  double frr = 0.0;  // genuine with score < threshold
};

enum class EerMethod {
  kInterpolated,  // linear interpolation at the FAR/FRR sign change
  kDiscrete,      // mean of FAR and FRR at the point minimizing |FAR - FRR|
};

struct RocCurve {
  // Thresholds ascending: a sentinel below every score, midpoints between
  // consecutive distinct scores, a sentinel above every score.
  std::vector<RocPoint> points;
  double eer = 0.0;
  double eer_threshold = 0.0;
  double accuracy_at_half = 0.0;
  double accuracy_at_eer = 0.0;
};

// Throws DataError unless both classes are present.
RocCurve roc_and_eer(const ScoreSet& scores,
                     EerMethod method = EerMethod::kInterpolated);

// Fraction of samples whose thresholded prediction matches the label.
double accuracy(const ScoreSet& scores, double threshold = 0.5);

struct InstanceSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
  // Position in the input of the instance at the (lower) median.
  std::size_t median_index = 0;
};

// Quartiles by linear interpolation between order statistics.
InstanceSummary summarize_instances(std::span<const double> values);

std::string score_set_csv(const ScoreSet& scores);  // user_id,label,score
std::string roc_curve_csv(const RocCurve& curve);   // threshold,far,frr
nlohmann::json summary_json(const InstanceSummary& summary);

}  // namespace fedsig
