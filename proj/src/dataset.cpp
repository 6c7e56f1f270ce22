// Copyright 2026 The fedpdd-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedpdd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fedpdd/rng.hpp"
#include "json.hpp"

namespace fedpdd {

struct VerticalDataset::Store {
  std::vector<FeatureRecord> slices[2];  // by dense position, per party
  std::vector<int> labels;               // by dense position
  std::unordered_map<SampleId, std::size_t> position;
  FieldLayout layouts[2];
};

VerticalDataset::VerticalDataset(std::shared_ptr<const Store> store,
                                 std::vector<SampleId> members_a,
                                 std::vector<SampleId> members_b,
                                 std::vector<SampleId> overlapped)
    : store_(std::move(store)), overlapped_(std::move(overlapped)) {
  members_[0] = std::move(members_a);
  members_[1] = std::move(members_b);
  for (auto& m : members_) std::sort(m.begin(), m.end());
  std::sort(overlapped_.begin(), overlapped_.end());
  const std::size_t denom = members_[0].size() + members_[1].size();
  alpha_ = denom == 0 ? 0.0
                      : static_cast<double>(overlapped_.size()) /
                            static_cast<double>(denom);
}

bool VerticalDataset::contains(Party p, SampleId id) const {
  const auto& m = members(p);
  return std::binary_search(m.begin(), m.end(), id);
}

const FeatureRecord& VerticalDataset::record(Party p, SampleId id) const {
  const auto it = store_->position.find(id);
  if (it == store_->position.end()) {
    throw std::out_of_range("record: unknown sample id");
  }
  return store_->slices[static_cast<int>(p)][it->second];
}

int VerticalDataset::label(SampleId id) const {
  const auto it = store_->position.find(id);
  if (it == store_->position.end()) {
    throw std::out_of_range("label: unknown sample id");
  }
  return store_->labels[it->second];
}

const FieldLayout& VerticalDataset::layout(Party p) const {
  return store_->layouts[static_cast<int>(p)];
}

// ---------------------------------------------------------------------------
// Schema / CSV ingestion

namespace {
Schema parse_schema_json(const nlohmann::json& j);
}  // namespace

Schema Schema::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("schema: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

Schema Schema::from_json_text(const std::string& text) {
  // Bad syntax, missing keys and wrong value types all surface as
  // ConfigError; the inner throws below pass through untouched.
  try {
    return parse_schema_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: invalid JSON: ") + e.what());
  }
}

namespace {

Schema parse_schema_json(const nlohmann::json& j) {
  Schema schema;
  int label_columns = 0;
  for (const auto& jc : j.at("columns")) {
    ColumnSpec col;
    col.name = jc.at("name").get<std::string>();
    const std::string kind = jc.at("kind").get<std::string>();
    if (kind == "categorical") {
      col.kind = FieldKind::Categorical;
      col.vocab_size = jc.value("vocab_size", 0);
      if (col.vocab_size < 2) {
        throw ConfigError("schema: categorical column '" + col.name +
                          "' needs vocab_size >= 2");
      }
    } else if (kind == "numerical") {
      col.kind = FieldKind::Numerical;
    } else if (kind == "label") {
      col.kind = FieldKind::Label;
      ++label_columns;
    } else {
      throw ConfigError("schema: unknown kind '" + kind + "' for column '" +
                        col.name + "'");
    }
    if (col.kind != FieldKind::Label) {
      const std::string party = jc.at("party").get<std::string>();
      if (party == "A") {
        col.party = Party::A;
      } else if (party == "B") {
        col.party = Party::B;
      } else {
        throw ConfigError("schema: column '" + col.name +
                          "' has unknown party '" + party + "'");
      }
    }
    schema.columns.push_back(std::move(col));
  }
  if (label_columns != 1) {
    throw ConfigError("schema: exactly one label column is required");
  }
  return schema;
}

}  // namespace

FieldLayout Schema::layout() const {
  FieldLayout out;
  for (const auto& col : columns) {
    if (col.kind == FieldKind::Label) continue;
    out.kinds.push_back(col.kind);
    out.vocab_sizes.push_back(
        col.kind == FieldKind::Categorical ? col.vocab_size : 1);
  }
  return out;
}

std::map<int, Party> Schema::assignment() const {
  std::map<int, Party> out;
  int field = 0;
  for (const auto& col : columns) {
    if (col.kind == FieldKind::Label) continue;
    out[field++] = *col.party;
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<FeatureRecord> load_csv(const std::string& path,
                                    const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_csv: cannot open " + path);

  std::string header;
  if (!std::getline(in, header)) {
    return {};  // empty file, empty collection
  }
  const std::vector<std::string> names = split_line(header);

  // Map each schema column to its position in the header.
  std::vector<std::size_t> column_pos(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto it =
        std::find(names.begin(), names.end(), schema.columns[c].name);
    if (it == names.end()) {
      throw ConfigError("load_csv: column '" + schema.columns[c].name +
                        "' missing from header");
    }
    column_pos[c] = static_cast<std::size_t>(it - names.begin());
  }

  // Dictionary per categorical column; index 0 is reserved for unknowns.
  std::vector<std::unordered_map<std::string, int>> dict(
      schema.columns.size());

  std::vector<FeatureRecord> records;
  std::string line;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != names.size()) {
      throw ParseError("load_csv: row " + std::to_string(row) + ": expected " +
                       std::to_string(names.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    FeatureRecord rec;
    rec.sample = static_cast<SampleId>(row - 1);
    int field = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const ColumnSpec& col = schema.columns[c];
      const std::string& cell = cells[column_pos[c]];
      if (col.kind == FieldKind::Label) {
        if (cell == "0") {
          rec.label = 0;
        } else if (cell == "1") {
          rec.label = 1;
        } else {
          throw ParseError("load_csv: row " + std::to_string(row) +
                           ": label must be 0 or 1, got '" + cell + "'");
        }
        continue;
      }
      if (col.kind == FieldKind::Numerical) {
        std::size_t consumed = 0;
        double value = 0.0;
        try {
          value = std::stod(cell, &consumed);
        } catch (const std::exception&) {
          consumed = 0;
        }
        if (consumed != cell.size() || cell.empty()) {
          throw ParseError("load_csv: row " + std::to_string(row) +
                           ": non-numeric value '" + cell + "' in column '" +
                           col.name + "'");
        }
        rec.numerical.emplace_back(field, value);
      } else {
        auto& d = dict[c];
        int index;
        const auto it = d.find(cell);
        if (it != d.end()) {
          index = it->second;
        } else if (static_cast<int>(d.size()) + 1 < col.vocab_size) {
          index = static_cast<int>(d.size()) + 1;
          d.emplace(cell, index);
        } else {
          index = 0;  // vocabulary exhausted, reserved unknown bucket
        }
        rec.categorical.emplace_back(field, index);
      }
      ++field;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

void check_spec(const SyntheticSpec& spec) {
  if (spec.samples <= 0 || spec.fields_per_party <= 0) {
    throw std::domain_error("synthesize: samples and fields must be positive");
  }
  if (spec.vocab_size < 2) {
    throw std::domain_error("synthesize: vocab_size must be >= 2");
  }
  if (spec.label_noise < 0.0 || spec.label_noise > 1.0) {
    throw std::domain_error("synthesize: label_noise must lie in [0, 1]");
  }
}

}  // namespace

std::vector<FeatureRecord> synthesize(const SyntheticSpec& spec,
                                      std::uint64_t seed) {
  check_spec(spec);
  Rng rng(seed);
  const int fields = 2 * spec.fields_per_party;
  const int vocab = spec.vocab_size;

  // Per-category additive effects, shared ground truth for both parties.
  std::vector<std::vector<double>> effects(fields);
  for (auto& row : effects) {
    row.resize(vocab);
    for (double& w : row) w = rng.normal();
  }

  const double obs_scale =
      std::sqrt(1.0 + spec.bucket_noise * spec.bucket_noise);
  std::vector<FeatureRecord> records;
  records.reserve(spec.samples);
  for (int i = 0; i < spec.samples; ++i) {
    FeatureRecord rec;
    rec.sample = static_cast<SampleId>(i);
    const double latent = rng.normal();
    double idio = 0.0;
    for (int f = 0; f < fields; ++f) {
      const double obs = latent + spec.bucket_noise * rng.normal();
      // Quantile bucketing keeps the marginal category distribution uniform.
      int cat = static_cast<int>(std::floor(norm_cdf(obs / obs_scale) * vocab));
      cat = std::clamp(cat, 0, vocab - 1);
      rec.categorical.emplace_back(f, cat);
      idio += effects[f][cat];
    }
    const double score = latent + spec.idiosyncratic_weight * idio /
                                      std::sqrt(static_cast<double>(fields));
    const double p = 1.0 / (1.0 + std::exp(-spec.signal_strength * score));
    int label = rng.bernoulli(p) ? 1 : 0;
    if (rng.bernoulli(spec.label_noise)) label = 1 - label;
    rec.label = label;
    records.push_back(std::move(rec));
  }
  return records;
}

FieldLayout synthetic_layout(const SyntheticSpec& spec) {
  FieldLayout out;
  const int fields = 2 * spec.fields_per_party;
  out.kinds.assign(fields, FieldKind::Categorical);
  out.vocab_sizes.assign(fields, spec.vocab_size);
  return out;
}

std::map<int, Party> synthetic_assignment(const SyntheticSpec& spec) {
  std::map<int, Party> out;
  for (int f = 0; f < 2 * spec.fields_per_party; ++f) {
    out[f] = f < spec.fields_per_party ? Party::A : Party::B;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vertical split

namespace {

FieldLayout infer_layout(const std::vector<FeatureRecord>& records,
                         int field_count) {
  FieldLayout out;
  out.kinds.assign(field_count, FieldKind::Categorical);
  out.vocab_sizes.assign(field_count, 1);
  for (const auto& rec : records) {
    for (const auto& [f, c] : rec.categorical) {
      out.vocab_sizes[f] = std::max(out.vocab_sizes[f], c + 1);
    }
    for (const auto& [f, v] : rec.numerical) {
      (void)v;
      out.kinds[f] = FieldKind::Numerical;
    }
  }
  return out;
}

}  // namespace

VerticalDataset vertical_split(const std::vector<FeatureRecord>& records,
                               const std::map<int, Party>& feature_assignment,
                               double alpha, std::uint64_t seed,
                               const std::optional<FieldLayout>& global_layout) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw std::domain_error("vertical_split: alpha must lie in (0, 1]");
  }

  // Validate the assignment against the fields actually referenced.
  for (const auto& rec : records) {
    for (const auto& [f, c] : rec.categorical) {
      (void)c;
      if (!feature_assignment.count(f)) {
        throw ConfigError("vertical_split: field " + std::to_string(f) +
                          " not assigned to a party");
      }
    }
    for (const auto& [f, v] : rec.numerical) {
      (void)v;
      if (!feature_assignment.count(f)) {
        throw ConfigError("vertical_split: field " + std::to_string(f) +
                          " not assigned to a party");
      }
    }
  }

  const int global_fields =
      feature_assignment.empty() ? 0 : feature_assignment.rbegin()->first + 1;
  const FieldLayout global =
      global_layout ? *global_layout : infer_layout(records, global_fields);
  if (global.field_count() < global_fields) {
    throw ConfigError("vertical_split: layout smaller than assignment");
  }

  // Dense local field numbering per party, preserving global order.
  std::vector<int> local_index(global.field_count(), -1);
  auto store = std::make_shared<VerticalDataset::Store>();
  for (int p = 0; p < 2; ++p) store->layouts[p] = FieldLayout{};
  for (const auto& [f, party] : feature_assignment) {
    FieldLayout& layout = store->layouts[static_cast<int>(party)];
    local_index[f] = layout.field_count();
    layout.kinds.push_back(global.kinds[f]);
    layout.vocab_sizes.push_back(global.vocab_sizes[f]);
  }

  // Project every record onto both parties' feature spaces.
  store->slices[0].reserve(records.size());
  store->slices[1].reserve(records.size());
  store->labels.reserve(records.size());
  for (const auto& rec : records) {
    FeatureRecord a, b;
    a.sample = b.sample = rec.sample;
    a.label = b.label = rec.label;
    for (const auto& [f, c] : rec.categorical) {
      FeatureRecord& dst =
          feature_assignment.at(f) == Party::A ? a : b;
      dst.categorical.emplace_back(local_index[f], c);
    }
    for (const auto& [f, v] : rec.numerical) {
      FeatureRecord& dst =
          feature_assignment.at(f) == Party::A ? a : b;
      dst.numerical.emplace_back(local_index[f], v);
    }
    const std::size_t pos = store->labels.size();
    if (!store->position.emplace(rec.sample, pos).second) {
      throw ConfigError("vertical_split: duplicate sample id " +
                        std::to_string(rec.sample));
    }
    store->slices[0].push_back(std::move(a));
    store->slices[1].push_back(std::move(b));
    store->labels.push_back(rec.label);
  }

  const std::size_t total = records.size();
  // Overlap count solving k = round(alpha * (N + k)); the achievable ratio
  // tops out at 0.5 (full overlap), so larger requests clamp to k = N.
  std::size_t k;
  if (alpha >= 0.5) {
    k = total;
  } else {
    k = static_cast<std::size_t>(
        std::llround(alpha / (1.0 - alpha) * static_cast<double>(total)));
    k = std::min(k, total);
  }
  if (k < 1) {
    throw std::domain_error(
        "vertical_split: too few samples for the requested alpha");
  }

  std::vector<SampleId> ids;
  ids.reserve(total);
  for (const auto& rec : records) ids.push_back(rec.sample);
  Rng rng(seed);
  rng.shuffle(ids);

  std::vector<SampleId> overlapped(ids.begin(), ids.begin() + k);
  std::vector<SampleId> members_a = overlapped;
  std::vector<SampleId> members_b = overlapped;
  const std::size_t rest = total - k;
  const std::size_t to_a = rest / 2 + rest % 2;
  for (std::size_t i = k; i < total; ++i) {
    if (i - k < to_a) {
      members_a.push_back(ids[i]);
    } else {
      members_b.push_back(ids[i]);
    }
  }

  return VerticalDataset(std::move(store), std::move(members_a),
                         std::move(members_b), std::move(overlapped));
}

// ---------------------------------------------------------------------------
// Train/validation/test partitioning

DatasetViews train_val_test_split(const VerticalDataset& dataset,
                                  const SplitSpec& spec) {
  if (dataset.empty()) {
    throw std::domain_error("train_val_test_split: empty dataset");
  }
  if (!(spec.train_fraction > 0.0) || !(spec.train_fraction < 1.0) ||
      !(spec.validation_fraction > 0.0) || !(spec.validation_fraction < 1.0)) {
    throw std::domain_error(
        "train_val_test_split: fractions must lie in (0, 1)");
  }

  std::vector<SampleId> ids;
  {
    const auto& a = dataset.members(Party::A);
    const auto& b = dataset.members(Party::B);
    ids.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                   std::back_inserter(ids));
  }
  const std::size_t total = ids.size();
  const auto pool_count = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(total)));
  const auto val_count = static_cast<std::size_t>(
      std::llround(spec.validation_fraction * static_cast<double>(pool_count)));
  if (pool_count == 0 || pool_count >= total || val_count == 0 ||
      val_count >= pool_count) {
    throw std::domain_error(
        "train_val_test_split: fractions produce an empty partition");
  }

  Rng rng(spec.seed);
  rng.shuffle(ids);
  // Partition by id so that overlapped samples land in the same partition
  // for both parties: [train | validation | test].
  std::vector<SampleId> train_ids(ids.begin(), ids.begin() + pool_count);
  std::vector<SampleId> val_ids(train_ids.end() - val_count, train_ids.end());
  train_ids.resize(pool_count - val_count);
  std::vector<SampleId> test_ids(ids.begin() + pool_count, ids.end());

  std::sort(train_ids.begin(), train_ids.end());
  std::sort(val_ids.begin(), val_ids.end());
  std::sort(test_ids.begin(), test_ids.end());

  const auto restrict = [&dataset](const std::vector<SampleId>& part)
      -> VerticalDataset {
    std::vector<SampleId> a, b, ovl;
    for (SampleId id : part) {
      const bool in_a = dataset.contains(Party::A, id);
      const bool in_b = dataset.contains(Party::B, id);
      if (in_a) a.push_back(id);
      if (in_b) b.push_back(id);
      if (in_a && in_b) ovl.push_back(id);
    }
    return VerticalDataset(dataset.store_, std::move(a), std::move(b),
                           std::move(ovl));
  };

  // Test partition is fully aligned: both parties hold their slices for
  // every test id regardless of training-side membership.
  VerticalDataset test(dataset.store_, test_ids, test_ids, test_ids);

  return DatasetViews{restrict(train_ids), restrict(val_ids),
                      std::move(test)};
}

}  // namespace fedpdd
