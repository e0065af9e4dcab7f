#include "fedsig/dataset.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <regex>
#include <set>
#include <sstream>

#include "fedsig/error.h"
#include "fedsig/rng.h"

namespace fedsig {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

std::int64_t parse_int(std::string_view field, std::size_t line_no) {
  std::int64_t value = 0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": '" +
                     std::string(field) + "' is not an integer");
  }
  return value;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  // Drop trailing blank lines.
  while (!lines.empty() && split_fields(lines.back()).empty()) lines.pop_back();
  return lines;
}

// Axis centering/scaling over the true frames only.
std::vector<double> normalize_axis(const std::vector<double>& values) {
  double sum = 0.0;
  double lo = values.front(), hi = values.front();
  for (double v : values) {
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double centroid = sum / static_cast<double>(values.size());
  const double range = hi > lo ? hi - lo : 1.0;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = (values[i] - centroid) / range;
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

RawSignature parse_svc_file(std::string_view text, Label label, int user_id,
                            int sample_index) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("line 1: missing point count");
  const auto header = split_fields(lines[0]);
  if (header.size() != 1) {
    throw ParseError("line 1: expected a single point count");
  }
  const std::int64_t declared = parse_int(header[0], 1);
  if (declared < 2) {
    throw ParseError("line 1: a signature needs at least 2 points, declared " +
                     std::to_string(declared));
  }
  const std::size_t available = lines.size() - 1;
  if (available != static_cast<std::size_t>(declared)) {
    throw ParseError("line " + std::to_string(lines.size() + 1) +
                     ": declared " + std::to_string(declared) +
                     " points but found " + std::to_string(available));
  }

  RawSignature sig{user_id, sample_index, label, {}};
  sig.points.reserve(available);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != 4 && fields.size() != 7) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 or 7 "
                       "fields, found " + std::to_string(fields.size()));
    }
    PenPoint p;
    p.x = parse_int(fields[0], line_no);
    p.y = parse_int(fields[1], line_no);
    p.timestamp = parse_int(fields[2], line_no);
    const std::int64_t button = parse_int(fields[3], line_no);
    if (button != 0 && button != 1) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": button status must be 0 or 1");
    }
    p.button = static_cast<int>(button);
    if (fields.size() == 7) {
      p.azimuth = parse_int(fields[4], line_no);
      p.altitude = parse_int(fields[5], line_no);
      p.pressure = parse_int(fields[6], line_no);
    }
    sig.points.push_back(p);
  }
  return sig;
}

std::string format_svc_file(const RawSignature& signature) {
  std::ostringstream out;
  out << signature.points.size() << "\n";
  for (const auto& p : signature.points) {
    out << p.x << ' ' << p.y << ' ' << p.timestamp << ' ' << p.button;
    if (p.azimuth && p.altitude && p.pressure) {
      out << ' ' << *p.azimuth << ' ' << *p.altitude << ' ' << *p.pressure;
    }
    out << "\n";
  }
  return out.str();
}

NormalizedTrajectory normalize(const RawSignature& raw) {
  if (raw.points.size() < 2) {
    throw DataError("normalize: signature needs at least 2 points");
  }
  std::vector<double> xs, ys;
  xs.reserve(raw.points.size());
  ys.reserve(raw.points.size());
  for (const auto& p : raw.points) {
    xs.push_back(static_cast<double>(p.x));
    ys.push_back(static_cast<double>(p.y));
  }
  return {normalize_axis(xs), normalize_axis(ys)};
}

ProcessedSignature pad(const NormalizedTrajectory& trajectory,
                       std::size_t max_length, Label label, int user_id,
                       int sample_index) {
  const std::size_t length = trajectory.xs.size();
  if (trajectory.ys.size() != length) {
    throw StructuralError("pad: x and y channels differ in length");
  }
  if (length > max_length) {
    throw DataError("signature U" + std::to_string(user_id) + "S" +
                    std::to_string(sample_index) + " has " +
                    std::to_string(length) + " points, more than the maximum " +
                    std::to_string(max_length));
  }
  ProcessedSignature out{Tensor({2, max_length}), length, label, user_id,
                         sample_index};
  std::copy(trajectory.xs.begin(), trajectory.xs.end(),
            out.channels.data().begin());
  std::copy(trajectory.ys.begin(), trajectory.ys.end(),
            out.channels.data().begin() + static_cast<std::ptrdiff_t>(max_length));
  return out;
}

ProcessedSignature preprocess(const RawSignature& raw, std::size_t max_length) {
  return pad(normalize(raw), max_length, raw.label, raw.user_id,
             raw.sample_index);
}

std::string_view provenance_name(Provenance provenance) {
  switch (provenance) {
    case Provenance::kSvcTask1: return "svc-task1";
    case Provenance::kSvcTask2: return "svc-task2";
    case Provenance::kSvcMerged: return "svc-merged";
    case Provenance::kSynthetic: return "synthetic";
  }
  return "unknown";
}

std::vector<int> Corpus::user_ids() const {
  std::set<int> ids;
  for (const auto& s : signatures) ids.insert(s.user_id);
  return {ids.begin(), ids.end()};
}

std::size_t Corpus::count(int user_id, Label label) const {
  return static_cast<std::size_t>(
      std::count_if(signatures.begin(), signatures.end(), [&](const auto& s) {
        return s.user_id == user_id && s.label == label;
      }));
}

std::vector<ProcessedSignature> preprocess_all(const Corpus& corpus,
                                               std::size_t max_length) {
  std::vector<ProcessedSignature> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus.signatures) out.push_back(preprocess(s, max_length));
  return out;
}

Corpus select_users(const Corpus& corpus, std::span<const int> users) {
  const std::set<int> wanted(users.begin(), users.end());
  Corpus out{{}, corpus.provenance, {}};
  for (const auto& s : corpus.signatures) {
    if (wanted.contains(s.user_id)) out.signatures.push_back(s);
  }
  return out;
}

Corpus merge_corpora(const Corpus& first, const Corpus& second) {
  Corpus out = first;
  const auto ids = first.user_ids();
  const int offset = ids.empty() ? 0 : ids.back();
  for (auto s : second.signatures) {
    s.user_id += offset;
    out.signatures.push_back(std::move(s));
  }
  out.warnings.insert(out.warnings.end(), second.warnings.begin(),
                      second.warnings.end());
  const bool both_svc = first.provenance != Provenance::kSynthetic &&
                        second.provenance != Provenance::kSynthetic;
  out.provenance = both_svc ? Provenance::kSvcMerged : Provenance::kSynthetic;
  return out;
}

TrainTestSplit split_train_test(const Corpus& corpus,
                                std::size_t train_per_class,
                                std::uint64_t seed,
                                std::optional<std::size_t> test_per_class) {
  TrainTestSplit split{{{}, corpus.provenance, {}}, {{}, corpus.provenance, {}}};
  // (user, class) -> signature indices in corpus order
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < corpus.signatures.size(); ++i) {
    const auto& s = corpus.signatures[i];
    groups[{s.user_id, class_index(s.label)}].push_back(i);
  }
  for (int user : corpus.user_ids()) {
    for (Label label : {Label::kGenuine, Label::kForged}) {
      auto& members = groups[{user, class_index(label)}];
      if (members.size() < train_per_class + 1) {
        throw DataError("user " + std::to_string(user) + " has " +
                        std::to_string(members.size()) + " " +
                        std::string(label_name(label)) +
                        " samples; need at least " +
                        std::to_string(train_per_class + 1));
      }
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(user),
                       static_cast<std::uint64_t>(class_index(label))));
      rng.shuffle(members);
      for (std::size_t r = 0; r < members.size(); ++r) {
        const auto& sig = corpus.signatures[members[r]];
        if (r < train_per_class) {
          split.train.signatures.push_back(sig);
        } else if (!test_per_class || r - train_per_class < *test_per_class) {
          split.test.signatures.push_back(sig);
        }
      }
    }
  }
  return split;
}

std::vector<Corpus> partition_agents(const Corpus& corpus, std::size_t agents,
                                     std::uint64_t seed) {
  auto users = corpus.user_ids();
  if (agents == 0) throw ConfigError("agent count must be at least 1");
  if (agents > users.size()) {
    throw ConfigError("cannot partition " + std::to_string(users.size()) +
                      " users among " + std::to_string(agents) + " agents");
  }
  Rng rng(mix_seed(seed, 0x9a27));
  rng.shuffle(users);
  const std::size_t base = users.size() / agents;
  const std::size_t extra = users.size() % agents;
  std::vector<Corpus> parts;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < agents; ++k) {
    const std::size_t n = base + (k < extra ? 1 : 0);
    parts.push_back(select_users(
        corpus, std::span<const int>(users).subspan(offset, n)));
    offset += n;
  }
  return parts;
}

namespace {

struct Harmonic {
  double amplitude;
  double frequency;
  double phase;
};

struct AxisStyle {
  std::vector<Harmonic> harmonics;
  double drift = 0.0;
};

struct Style {
  AxisStyle x;
  AxisStyle y;
  double length = 0.0;
};

constexpr std::size_t kHarmonics = 3;

AxisStyle random_axis(Rng& rng, double drift_lo, double drift_hi) {
  AxisStyle axis;
  const double base = rng.uniform(1.0, 2.5);
  for (std::size_t h = 1; h <= kHarmonics; ++h) {
    const double hd = static_cast<double>(h);
    axis.harmonics.push_back({rng.uniform(0.3, 1.0) / hd, base * hd,
                              rng.uniform(0.0, 2.0 * std::numbers::pi)});
  }
  axis.drift = rng.uniform(drift_lo, drift_hi);
  return axis;
}

AxisStyle perturb(const AxisStyle& axis, double scale, Rng& rng) {
  AxisStyle out = axis;
  for (auto& h : out.harmonics) {
    h.amplitude *= 1.0 + scale * rng.normal();
    h.frequency *= 1.0 + 0.2 * scale * rng.normal();
    h.phase += scale * rng.normal();
  }
  out.drift *= 1.0 + scale * rng.normal();
  return out;
}

AxisStyle blend(const AxisStyle& a, const AxisStyle& b, double w) {
  AxisStyle out = a;
  for (std::size_t h = 0; h < out.harmonics.size(); ++h) {
    out.harmonics[h].amplitude =
        (1 - w) * a.harmonics[h].amplitude + w * b.harmonics[h].amplitude;
    out.harmonics[h].phase =
        (1 - w) * a.harmonics[h].phase + w * b.harmonics[h].phase;
  }
  out.drift = (1 - w) * a.drift + w * b.drift;
  return out;
}

struct Tremor {
  double amplitude = 0.0;
  double frequency = 0.0;
  double phase = 0.0;
};

double eval_axis(const AxisStyle& axis, double s) {
  double v = axis.drift * s;
  for (const auto& h : axis.harmonics) {
    v += h.amplitude * std::sin(2.0 * std::numbers::pi * h.frequency * s + h.phase);
  }
  return v;
}

RawSignature render(const AxisStyle& xs, const AxisStyle& ys,
                    std::size_t length, double jitter, const Tremor& tremor,
                    Rng& rng, int user, int sample, Label label) {
  constexpr double kScale = 1000.0;
  constexpr double kOffset = 5000.0;
  RawSignature sig{user, sample, label, {}};
  sig.points.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const double s = static_cast<double>(t) / static_cast<double>(length - 1);
    const double shake =
        tremor.amplitude *
        std::sin(2.0 * std::numbers::pi * tremor.frequency * s + tremor.phase);
    const double x = eval_axis(xs, s) + shake + jitter * rng.normal();
    const double y = eval_axis(ys, s) + 0.8 * shake + jitter * rng.normal();
    PenPoint p;
    p.x = static_cast<std::int64_t>(std::llround(kOffset + kScale * x));
    p.y = static_cast<std::int64_t>(std::llround(kOffset + kScale * y));
    p.timestamp = static_cast<std::int64_t>(t) * 10;
    p.button = 1;
    sig.points.push_back(p);
  }
  return sig;
}

}  // namespace

Corpus synth_generate(const SynthSpec& spec) {
  if (spec.num_users == 0 || spec.genuine_per_user == 0 ||
      spec.forged_per_user == 0) {
    throw ConfigError("synthetic corpus counts must be at least 1");
  }
  if (spec.min_length < 2 || spec.min_length > spec.max_length) {
    throw ConfigError("synthetic length range must satisfy 2 <= min <= max");
  }
  if (spec.max_length > spec.length_limit) {
    throw ConfigError("synthetic max length " + std::to_string(spec.max_length) +
                      " exceeds the limit " + std::to_string(spec.length_limit));
  }
  if (spec.num_users < 2) {
    throw ConfigError("synthetic forgeries need at least 2 users");
  }
  const double lo = static_cast<double>(spec.min_length);
  const double hi = static_cast<double>(spec.max_length);
  // Genuine lengths sit in the lower part of the range; forgeries are
  // executed more slowly and may extend to the top.
  const double genuine_hi = lo + (hi - lo) * 0.7;

  std::vector<Style> styles;
  Rng style_rng(mix_seed(spec.seed, 0x5717e));
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    Style style;
    style.x = random_axis(style_rng, 1.0, 3.0);
    style.y = random_axis(style_rng, -0.5, 0.5);
    style.length = style_rng.uniform(lo, genuine_hi);
    styles.push_back(std::move(style));
  }

  auto clamp_length = [&](double length) {
    return static_cast<std::size_t>(
        std::clamp(std::llround(length), static_cast<long long>(spec.min_length),
                   static_cast<long long>(spec.max_length)));
  };

  Corpus corpus;
  corpus.provenance = Provenance::kSynthetic;
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    const int user = static_cast<int>(u) + 1;
    const Style& style = styles[u];
    int sample = 1;
    for (std::size_t g = 0; g < spec.genuine_per_user; ++g, ++sample) {
      Rng rng(mix_seed(spec.seed, u, static_cast<std::uint64_t>(sample)));
      const auto xs = perturb(style.x, 0.04, rng);
      const auto ys = perturb(style.y, 0.04, rng);
      const std::size_t length =
          clamp_length(style.length * (1.0 + 0.04 * rng.normal()));
      corpus.signatures.push_back(render(xs, ys, length, 0.004, {}, rng, user,
                                         sample, Label::kGenuine));
    }
    for (std::size_t f = 0; f < spec.forged_per_user; ++f, ++sample) {
      Rng rng(mix_seed(spec.seed, u, static_cast<std::uint64_t>(sample)));
      std::size_t forger = rng.below(spec.num_users - 1);
      if (forger >= u) ++forger;
      const Style& other = styles[forger];
      const double pull = rng.uniform(0.1, 0.3);
      const auto xs = perturb(blend(style.x, other.x, pull), 0.15, rng);
      const auto ys = perturb(blend(style.y, other.y, pull), 0.15, rng);
      const std::size_t length =
          clamp_length(style.length * rng.uniform(1.15, 1.45));
      const Tremor tremor{rng.uniform(0.03, 0.06), rng.uniform(12.0, 20.0),
                          rng.uniform(0.0, 2.0 * std::numbers::pi)};
      corpus.signatures.push_back(render(xs, ys, length, 0.012, tremor, rng,
                                         user, sample, Label::kForged));
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& directory, int task) {
  if (task != 1 && task != 2) throw ConfigError("SVC task must be 1 or 2");
  if (!std::filesystem::is_directory(directory)) {
    throw DataError("corpus directory not found: " + directory.string());
  }
  static const std::regex kName(R"(u(\d+)s(\d+)\.txt)");
  std::vector<std::pair<std::pair<int, int>, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = lower(entry.path().filename().string());
    std::smatch m;
    if (!std::regex_match(name, m, kName)) continue;
    files.push_back({{std::stoi(m[1]), std::stoi(m[2])}, entry.path()});
  }
  if (files.empty()) {
    throw DataError("empty corpus: no U<user>S<sample>.TXT files in " +
                    directory.string());
  }
  std::sort(files.begin(), files.end());

  Corpus corpus;
  corpus.provenance = task == 1 ? Provenance::kSvcTask1 : Provenance::kSvcTask2;
  std::map<int, int> per_user;
  for (const auto& [key, path] : files) {
    const auto [user, sample] = key;
    if (sample < 1 || sample > kSvcSamplesPerUser) {
      corpus.warnings.push_back("ignored " + path.filename().string() +
                                ": sample index outside 1-40");
      continue;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const Label label =
        sample <= kSvcGenuinePerUser ? Label::kGenuine : Label::kForged;
    try {
      corpus.signatures.push_back(
          parse_svc_file(buffer.str(), label, user, sample));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    ++per_user[user];
  }
  for (const auto& [user, n] : per_user) {
    if (n != kSvcSamplesPerUser) {
      corpus.warnings.push_back("user " + std::to_string(user) + " has " +
                                std::to_string(n) + " of 40 samples");
    }
  }
  return corpus;
}

nlohmann::json corpus_manifest(const Corpus& corpus) {
  nlohmann::json users = nlohmann::json::array();
  for (int user : corpus.user_ids()) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : corpus.signatures) {
      if (s.user_id != user) continue;
      samples.push_back({{"sample", s.sample_index},
                         {"label", label_name(s.label)},
                         {"points", s.points.size()}});
    }
    users.push_back({{"user_id", user},
                     {"genuine", corpus.count(user, Label::kGenuine)},
                     {"forged", corpus.count(user, Label::kForged)},
                     {"samples", std::move(samples)}});
  }
  return {{"provenance", provenance_name(corpus.provenance)},
          {"signatures", corpus.size()},
          {"users", std::move(users)},
          {"warnings", corpus.warnings}};
}

Batch make_batch(std::span<const ProcessedSignature> data,
                 std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("make_batch: empty selection");
  const Shape& sample_shape = data[indices[0]].channels.shape();
  const std::size_t per_sample = shape_size(sample_shape);
  Batch batch{Tensor({indices.size(), sample_shape[0], sample_shape[1]}), {}};
  batch.labels.reserve(indices.size());
  auto dst = batch.inputs.data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& sig = data[indices[r]];
    if (sig.channels.shape() != sample_shape) {
      throw StructuralError("make_batch: signatures differ in padded shape");
    }
    std::copy(sig.channels.data().begin(), sig.channels.data().end(),
              dst.begin() + static_cast<std::ptrdiff_t>(r * per_sample));
    batch.labels.push_back(sig.label);
  }
  return batch;
}

Batch make_batch(std::span<const ProcessedSignature> data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(data, all);
}

}  // namespace fedsig
