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

#ifndef FEDPDD_DATASET_HPP
#define FEDPDD_DATASET_HPP

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedpdd/types.hpp"

namespace fedpdd {

enum class FieldKind { Categorical, Numerical, Label };

/// One labeled sample as held by a single owner. Field indices are dense
/// within the owner's feature space; every field appears at most once.
struct FeatureRecord {
  SampleId sample = 0;
  std::vector<std::pair<int, int>> categorical;     // (field, category)
  std::vector<std::pair<int, double>> numerical;    // (field, value)
  int label = 0;                                    // binary class
};

/// Field metadata of one feature space (field count, per-field vocabulary).
/// Numerical fields carry vocabulary size 1 (one value-scaled embedding row).
struct FieldLayout {
  std::vector<FieldKind> kinds;
  std::vector<int> vocab_sizes;

  int field_count() const { return static_cast<int>(kinds.size()); }
};

struct ColumnSpec {
  std::string name;
  FieldKind kind = FieldKind::Categorical;
  std::optional<Party> party;  // required for feature columns
  int vocab_size = 0;          // categorical columns
};

/// Declares the CSV columns: kind, owning party and (for categorical
/// columns) the vocabulary capacity. Exactly one label column is required.
struct Schema {
  std::vector<ColumnSpec> columns;

  static Schema from_json_file(const std::string& path);
  static Schema from_json_text(const std::string& text);

  /// Global field layout over the feature columns, in schema order.
  FieldLayout layout() const;
  /// Global field index -> owning party.
  std::map<int, Party> assignment() const;
};

/// Reads a header-row CSV per the schema. Category strings are dictionary
/// encoded in order of first appearance starting at index 1; strings beyond
/// the declared vocabulary capacity map to the reserved index 0.
std::vector<FeatureRecord> load_csv(const std::string& path,
                                    const Schema& schema);

/// Parameters of the synthetic generator. Every sample carries a latent
/// score; each field of either party buckets a noisy observation of it, so
/// both parties are informative about the label and an ensemble of the two
/// views beats each single view.
struct SyntheticSpec {
  int samples = 20000;
  int fields_per_party = 4;
  int vocab_size = 50;
  double bucket_noise = 0.6;          // per-field observation noise
  double signal_strength = 2.5;       // label logit scale on the latent
  double label_noise = 0.2;           // symmetric flip probability
  double idiosyncratic_weight = 0.3;  // per-category additive effects
};

std::vector<FeatureRecord> synthesize(const SyntheticSpec& spec,
                                      std::uint64_t seed);
FieldLayout synthetic_layout(const SyntheticSpec& spec);
std::map<int, Party> synthetic_assignment(const SyntheticSpec& spec);

struct SplitSpec {
  double train_fraction = 0.8;
  double validation_fraction = 0.1;  // of the train pool
  std::uint64_t seed = 0;
};

struct DatasetViews;

/// Two vertically-partitioned parties over a common sample universe.
/// Outside the overlapped set every sample belongs to exactly one party;
/// overlapped samples appear in both parties with the same label. Objects
/// are immutable after construction; views share the underlying storage.
class VerticalDataset {
 public:
  double alpha() const { return alpha_; }
  const std::vector<SampleId>& overlapped() const { return overlapped_; }
  const std::vector<SampleId>& members(Party p) const {
    return members_[static_cast<int>(p)];
  }
  std::size_t party_size(Party p) const { return members(p).size(); }
  std::size_t total_local_records() const {
    return party_size(Party::A) + party_size(Party::B);
  }
  bool empty() const { return total_local_records() == 0; }

  bool contains(Party p, SampleId id) const;
  /// The party's feature slice of the sample. Available for every sample in
  /// the universe (the party's own columns exist for all rows); membership
  /// is what `members`/`contains` express.
  const FeatureRecord& record(Party p, SampleId id) const;
  int label(SampleId id) const;
  const FieldLayout& layout(Party p) const;

  friend VerticalDataset vertical_split(
      const std::vector<FeatureRecord>& records,
      const std::map<int, Party>& feature_assignment, double alpha,
      std::uint64_t seed, const std::optional<FieldLayout>& global_layout);
  friend DatasetViews train_val_test_split(const VerticalDataset& dataset,
                                           const SplitSpec& spec);

 private:
  struct Store;
  VerticalDataset(std::shared_ptr<const Store> store,
                  std::vector<SampleId> members_a,
                  std::vector<SampleId> members_b,
                  std::vector<SampleId> overlapped);

  std::shared_ptr<const Store> store_;
  std::vector<SampleId> members_[2];  // sorted
  std::vector<SampleId> overlapped_;  // sorted
  double alpha_ = 0.0;
};

/// Train/validation/test partitions of one vertical dataset; the three
/// views share the underlying feature storage.
struct DatasetViews {
  VerticalDataset train;
  VerticalDataset validation;
  VerticalDataset test;
};

/// Projects global-field records onto two parties and designates the
/// overlapped subset. The overlap count k solves k = round(alpha*(N+k))
/// so that k / (|D^A|+|D^B|) matches the request within one sample; ratios
/// above the structural maximum 0.5 clamp to full overlap (alpha = 1 means
/// every sample is held by both parties). Non-overlapped samples go to
/// exactly one party, split evenly at random.
VerticalDataset vertical_split(
    const std::vector<FeatureRecord>& records,
    const std::map<int, Party>& feature_assignment, double alpha,
    std::uint64_t seed,
    const std::optional<FieldLayout>& global_layout = std::nullopt);

/// Carves test and validation partitions by sample id. Test samples stay
/// aligned (both parties hold their slices for every test id); train and
/// validation keep each party's own membership. No id appears in two
/// partitions.
DatasetViews train_val_test_split(const VerticalDataset& dataset,
                                  const SplitSpec& spec);

}  // namespace fedpdd

#endif  // FEDPDD_DATASET_HPP
