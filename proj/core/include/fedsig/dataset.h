#pragma once

// Signature ingestion and preprocessing.
//
// SVC-2004 file format: the first line holds the point count; each
// following line is one pen sample with whitespace-separated integers
//   X Y Timestamp ButtonStatus [Azimuth Altitude Pressure]
// Task 1 files carry 4 fields per line, Task 2 files carry 7.
//
// Corpus directories hold one file per signature named U<user>S<sample>.TXT
// (case-insensitive); samples 1-20 are genuine, 21-40 skilled forgeries.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsig/label.h"
#include "fedsig/model.h"
#include "fedsig/tensor.h"

namespace fedsig {

inline constexpr std::size_t kDefaultMaxLength = 800;
inline constexpr int kSvcSamplesPerUser = 40;
inline constexpr int kSvcGenuinePerUser = 20;

struct PenPoint {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t timestamp = 0;
  int button = 0;
  // Present only for 7-field (Task 2) lines. Unused by the model.
  std::optional<std::int64_t> azimuth;
  std::optional<std::int64_t> altitude;
  std::optional<std::int64_t> pressure;

  friend bool operator==(const PenPoint&, const PenPoint&) = default;
};

struct RawSignature {
  int user_id = 0;
  int sample_index = 0;
  Label label = Label::kGenuine;
  std::vector<PenPoint> points;

  friend bool operator==(const RawSignature&, const RawSignature&) = default;
};

// Throws ParseError naming the offending line.
RawSignature parse_svc_file(std::string_view text, Label label, int user_id,
                            int sample_index);
// Inverse of parse_svc_file.
std::string format_svc_file(const RawSignature& signature);

struct NormalizedTrajectory {
  std::vector<double> xs;
  std::vector<double> ys;
};

// Centers each axis on the arithmetic-mean centroid and divides by the
// axis range (max - min); a zero range divides by 1.
NormalizedTrajectory normalize(const RawSignature& raw);

struct ProcessedSignature {
  Tensor channels;  // [2 x max_length]: row 0 = x, row 1 = y
  std::size_t true_length = 0;
  Label label = Label::kGenuine;
  int user_id = 0;
  int sample_index = 0;
};

// Appends zero frames up to max_length. Throws DataError when the
// trajectory is longer than max_length.
ProcessedSignature pad(const NormalizedTrajectory& trajectory,
                       std::size_t max_length, Label label, int user_id,
                       int sample_index);
ProcessedSignature preprocess(const RawSignature& raw, std::size_t max_length);

enum class Provenance { kSvcTask1, kSvcTask2, kSvcMerged, kSynthetic };

std::string_view provenance_name(Provenance provenance);

struct Corpus {
  std::vector<RawSignature> signatures;
  Provenance provenance = Provenance::kSynthetic;
  // Non-fatal load issues, e.g. users with missing samples.
  std::vector<std::string> warnings;

  std::size_t size() const { return signatures.size(); }
  bool empty() const { return signatures.empty(); }
  // Sorted, unique.
  std::vector<int> user_ids() const;
  std::size_t count(int user_id, Label label) const;
};

std::vector<ProcessedSignature> preprocess_all(const Corpus& corpus,
                                               std::size_t max_length);

// Keeps signatures of the given users, in original order.
Corpus select_users(const Corpus& corpus, std::span<const int> users);

// Concatenates two corpora; users of `second` are renumbered to follow the
// largest user id of `first`.
Corpus merge_corpora(const Corpus& first, const Corpus& second);

struct TrainTestSplit {
  Corpus train;
  Corpus test;
};

// Per user and per class: a seeded random `train_per_class` samples go to
// train, the remainder (capped at test_per_class when given) to test.
TrainTestSplit split_train_test(
    const Corpus& corpus, std::size_t train_per_class = 16,
    std::uint64_t seed = 0,
    std::optional<std::size_t> test_per_class = std::nullopt);

// Partitions users (not samples) into `agents` groups whose sizes differ by
// at most one user. Larger groups come first.
std::vector<Corpus> partition_agents(const Corpus& corpus, std::size_t agents,
                                     std::uint64_t seed);

struct SynthSpec {
  std::size_t num_users = 10;
  std::size_t genuine_per_user = 20;
  std::size_t forged_per_user = 20;
  std::size_t min_length = 40;
  std::size_t max_length = 64;
  // Lengths beyond this are rejected; normally the model's max_length.
  std::size_t length_limit = kDefaultMaxLength;
  std::uint64_t seed = 0;
};

// Synthetic stand-in for SVC-2004. Each user has a latent trajectory style
// (a few sinusoid harmonics per axis plus a writing drift). Genuine samples
// jitter that style slightly; forgeries of a user are that style as
// imitated by another user: larger parameter distortion, partial drift
// toward the forger's own style, a slower (longer) execution and tremor.
Corpus synth_generate(const SynthSpec& spec);

// Loads U<user>S<sample>.TXT files from `directory`. Throws DataError for
// an empty directory and ParseError (with the file name) for bad files.
Corpus load_corpus(const std::filesystem::path& directory, int task);

// user/sample/label inventory plus warnings.
nlohmann::json corpus_manifest(const Corpus& corpus);

// Stacks the selected signatures into a model batch.
Batch make_batch(std::span<const ProcessedSignature> data,
                 std::span<const std::size_t> indices);
Batch make_batch(std::span<const ProcessedSignature> data);

}  // namespace fedsig
