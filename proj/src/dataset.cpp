#include "pregate/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>

#include "pregate/error.hpp"

namespace pregate {

nlohmann::json record_to_json(const SuggestionRecord& r) {
  return {{"x", r.x.values},
          {"context_stale", r.x.context_stale},
          {"y", r.y},
          {"timestamp", r.timestamp},
          {"session_id", r.session_id},
          {"suggestion_id", r.suggestion_id},
          {"prompt_length", r.prompt_length},
          {"suggestion_chars", r.suggestion_chars},
          {"decision_latency_ms", r.decision_latency_ms}};
}

SuggestionRecord record_from_json(const nlohmann::json& j) {
  try {
    SuggestionRecord r;
    r.x.values = j.at("x").get<std::vector<double>>();
    if (r.x.values.size() != kFeatureCount) {
      throw Error(ErrorCode::InvalidFormat, "record has " + std::to_string(r.x.values.size()) +
                                                " features, expected " + std::to_string(kFeatureCount));
    }
    r.x.context_stale = j.value("context_stale", false);
    r.y = j.at("y").get<int>();
    if (r.y != 0 && r.y != 1) throw Error(ErrorCode::InvalidFormat, "label must be 0 or 1");
    r.timestamp = j.value("timestamp", TimestampMs{0});
    r.session_id = j.value("session_id", std::string{});
    r.suggestion_id = j.value("suggestion_id", std::int64_t{0});
    r.prompt_length = j.value("prompt_length", std::int64_t{0});
    r.suggestion_chars = j.value("suggestion_chars", std::int64_t{0});
    r.decision_latency_ms = j.value("decision_latency_ms", std::int64_t{0});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidFormat, e.what());
  }
}

std::vector<SuggestionRecord> read_records_jsonl(std::istream& in) {
  std::vector<SuggestionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidFormat, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_records_jsonl(std::ostream& out, std::span<const SuggestionRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<SuggestionRecord> build_records(std::span<const TelemetryEvent> events, RecordBuildStats* stats) {
  RecordBuildStats local;
  RecordBuildStats& st = stats ? *stats : local;
  st = {};

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const TelemetryEvent*>> by_session;
  for (const auto& e : events) {
    auto [it, inserted] = by_session.try_emplace(e.session_id);
    if (inserted) order.push_back(e.session_id);
    it->second.push_back(&e);
  }

  std::vector<SuggestionRecord> out;
  for (const auto& sid : order) {
    auto& stream = by_session[sid];
    std::stable_sort(stream.begin(), stream.end(),
                     [](const TelemetryEvent* a, const TelemetryEvent* b) { return a->timestamp < b->timestamp; });

    SessionState state(sid);
    std::vector<SuggestionRecord> requested;
    std::vector<bool> labeled;
    std::vector<bool> shown;
    std::unordered_map<std::int64_t, std::size_t> slot_of;

    for (const TelemetryEvent* e : stream) {
      std::vector<Resolution> resolved;
      try {
        resolved = ingest_event(state, *e);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::RejectOutOfOrder) throw;
        ++st.rejected_events;
        continue;
      }
      for (const auto& res : resolved) {
        auto it = slot_of.find(res.suggestion_id);
        if (it == slot_of.end()) continue;
        auto& rec = requested[it->second];
        rec.y = is_accepted(res.label) ? 1 : 0;
        rec.decision_latency_ms = res.resolved_at - res.shown_at;
        labeled[it->second] = true;
      }
      const TimestampMs t = *state.last_activity;
      if (e->kind == EventKind::SuggestionRequested) {
        ++st.requests;
        SuggestionRecord rec;
        rec.x = build_feature_vector(state, e->payload.task_complexity, t);
        rec.timestamp = t;
        rec.session_id = sid;
        rec.suggestion_id = e->payload.suggestion_id;
        rec.prompt_length = e->payload.prompt_length;
        slot_of[rec.suggestion_id] = requested.size();
        requested.push_back(std::move(rec));
        labeled.push_back(false);
        shown.push_back(false);
      } else if (e->kind == EventKind::SuggestionShown) {
        auto it = slot_of.find(e->payload.suggestion_id);
        if (it != slot_of.end()) {
          requested[it->second].suggestion_chars = e->payload.suggestion_chars;
          shown[it->second] = true;
        }
      }
    }
    for (std::size_t i = 0; i < requested.size(); ++i) {
      if (labeled[i]) {
        ++st.labeled;
        out.push_back(std::move(requested[i]));
      } else if (shown[i]) {
        ++st.pending;
      } else {
        ++st.never_shown;
      }
    }
  }
  return out;
}

std::size_t LabeledData::positives() const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
}

LabeledData to_labeled(std::span<const SuggestionRecord> records) {
  LabeledData d;
  d.rows = records.size();
  d.cols = records.empty() ? kFeatureCount : records.front().x.values.size();
  d.x.reserve(d.rows * d.cols);
  d.y.reserve(d.rows);
  for (const auto& r : records) {
    if (r.x.values.size() != d.cols) throw Error(ErrorCode::LengthMismatch, "ragged feature vectors");
    d.x.insert(d.x.end(), r.x.values.begin(), r.x.values.end());
    d.y.push_back(r.y);
  }
  return d;
}

LabeledData subset(const LabeledData& data, std::span<const std::size_t> indices) {
  LabeledData d;
  d.rows = indices.size();
  d.cols = data.cols;
  d.x.reserve(d.rows * d.cols);
  d.y.reserve(d.rows);
  for (auto i : indices) {
    auto r = data.row(i);
    d.x.insert(d.x.end(), r.begin(), r.end());
    d.y.push_back(data.y[i]);
  }
  return d;
}

namespace {

// Largest remainder over integer weights; exact.
std::array<std::size_t, 3> apportion_exact(std::size_t total, const std::array<std::size_t, 3>& weights) {
  const std::size_t sum = weights[0] + weights[1] + weights[2];
  std::array<std::size_t, 3> out{};
  std::array<std::size_t, 3> rem{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = total * weights[i] / sum;
    rem[i] = total * weights[i] % sum;
    used += out[i];
  }
  std::array<std::size_t, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[idx[k % 3]];
  return out;
}

void check_fractions(const SplitFractions& f) {
  const double sum = f.train + f.validation + f.test;
  if (f.train < 0 || f.validation < 0 || f.test < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidConfig, "split fractions must be non-negative and sum to 1");
  }
}

}  // namespace

std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& weights) {
  const double sum = weights[0] + weights[1] + weights[2];
  std::array<std::size_t, 3> out{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    // Absorb representation error such as 0.6 * 10 = 5.9999...
    const double fl = std::floor(exact + 1e-9);
    out[i] = static_cast<std::size_t>(fl);
    frac[i] = std::max(0.0, exact - fl);
    used += out[i];
  }
  std::array<std::size_t, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[idx[k % 3]];
  return out;
}

Split stratified_split(std::span<const int> labels, SplitFractions fractions, std::uint64_t seed) {
  check_fractions(fractions);
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);

  const auto sizes = apportion(labels.size(), {fractions.train, fractions.validation, fractions.test});
  const auto pos_counts = apportion_exact(pos.size(), sizes);
  std::array<std::size_t, 3> neg_counts{};
  for (std::size_t s = 0; s < 3; ++s) {
    neg_counts[s] = sizes[s] - pos_counts[s];
    if (pos_counts[s] == 0 || neg_counts[s] == 0) {
      throw Error(ErrorCode::TooFewRecords, "each class must appear in every split (positives=" +
                                                std::to_string(pos.size()) + ", negatives=" +
                                                std::to_string(neg.size()) + ")");
    }
  }

  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  Split split;
  split.fractions = fractions;
  split.seed = seed;
  std::array<std::vector<std::size_t>*, 3> parts{&split.train, &split.validation, &split.test};
  std::size_t p = 0;
  std::size_t q = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    parts[s]->insert(parts[s]->end(), pos.begin() + static_cast<std::ptrdiff_t>(p),
                     pos.begin() + static_cast<std::ptrdiff_t>(p + pos_counts[s]));
    parts[s]->insert(parts[s]->end(), neg.begin() + static_cast<std::ptrdiff_t>(q),
                     neg.begin() + static_cast<std::ptrdiff_t>(q + neg_counts[s]));
    p += pos_counts[s];
    q += neg_counts[s];
    std::sort(parts[s]->begin(), parts[s]->end());
  }
  return split;
}

Split session_split(std::span<const SuggestionRecord> records, SplitFractions fractions, std::uint64_t seed) {
  check_fractions(fractions);
  std::vector<std::string> sessions;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = members.try_emplace(records[i].session_id);
    if (inserted) sessions.push_back(records[i].session_id);
    it->second.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(sessions.begin(), sessions.end(), rng);

  const auto sizes = apportion(records.size(), {fractions.train, fractions.validation, fractions.test});
  Split split;
  split.fractions = fractions;
  split.seed = seed;
  split.mode = SplitMode::BySession;
  std::array<std::vector<std::size_t>*, 3> parts{&split.train, &split.validation, &split.test};
  std::size_t target = 0;
  for (const auto& sid : sessions) {
    while (target < 2 && parts[target]->size() >= sizes[target]) ++target;
    const auto& m = members[sid];
    parts[target]->insert(parts[target]->end(), m.begin(), m.end());
  }
  for (auto* part : parts) std::sort(part->begin(), part->end());
  return split;
}

nlohmann::json split_to_json(const Split& s) {
  return {{"seed", s.seed},
          {"mode", s.mode == SplitMode::ByRecord ? "record" : "session"},
          {"fractions", {s.fractions.train, s.fractions.validation, s.fractions.test}},
          {"train", s.train},
          {"validation", s.validation},
          {"test", s.test}};
}

Split split_from_json(const nlohmann::json& j) {
  try {
    Split s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.mode = j.value("mode", std::string("record")) == "session" ? SplitMode::BySession : SplitMode::ByRecord;
    auto f = j.at("fractions").get<std::vector<double>>();
    if (f.size() != 3) throw Error(ErrorCode::InvalidFormat, "fractions must have three entries");
    s.fractions = {f[0], f[1], f[2]};
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.validation = j.at("validation").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidFormat, std::string("split manifest: ") + e.what());
  }
}

ClassWeights class_weights(std::span<const int> labels) {
  const auto n = static_cast<double>(labels.size());
  const auto n1 = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw Error(ErrorCode::SingleClass, "both classes are required for class weights");
  return {n / (2.0 * n0), n / (2.0 * n1)};
}

}  // namespace pregate
