#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "flowcls/dataset.hpp"

namespace flowcls::partition {

/// `excluded` rows belong to no partition (test rows of a k-fold design set).
enum class Partition : std::uint8_t { train, val, test, excluded };

std::string_view to_string(Partition p) noexcept;
Partition partition_from_string(std::string_view s);

enum class Strategy { random_stratified, temporal, disjoint, ood };

std::string_view to_string(Strategy s) noexcept;
Strategy strategy_from_string(std::string_view s);

struct SplitSpec {
    Strategy strategy = Strategy::random_stratified;
    double train = 0.6, val = 0.2, test = 0.2;
    std::uint64_t seed = 42;
    std::string label_column = "label";
    std::string group_key = "src_ip";      // disjoint
    std::string time_key = "flow_start";   // temporal
    std::vector<std::string> held_out_classes;  // ood

    /// Fractions in (0,1) summing to 1 within 1e-9. Throws config_error.
    void validate() const;
};

struct SplitAssignment {
    std::vector<Partition> tags;  // one per dataset row
    std::vector<bool> unseen;     // ood: test rows of held-out classes
    std::string dataset_hash;     // lineage: hash of the dataset the tags index
    Strategy strategy = Strategy::random_stratified;
    std::uint64_t seed = 0;
    int fold = -1;                // >= 0 for k-fold derived assignments

    std::vector<std::size_t> rows(Partition p) const;
    std::size_t count(Partition p) const;
    /// Hash of the dataset hash plus the sorted row ids of `p`.
    std::string fingerprint(Partition p) const;

    /// `row_id,partition` CSV; the header comment carries the lineage fields.
    std::string to_csv(const std::string& comment = {}) const;
    static SplitAssignment from_csv(std::string_view text);
};

/// Lineage hash of a dataset (its canonical CSV text).
std::string dataset_hash(const Dataset& ds);

SplitAssignment split_random_stratified(const Dataset& ds, const SplitSpec& spec);
SplitAssignment split_temporal(const Dataset& ds, const SplitSpec& spec);
SplitAssignment split_disjoint(const Dataset& ds, const SplitSpec& spec);
SplitAssignment split_ood(const Dataset& ds, const SplitSpec& spec);
/// Dispatches on spec.strategy.
SplitAssignment split(const Dataset& ds, const SplitSpec& spec);

/// JSON manifest: spec, realized counts and per-partition class distributions.
std::string manifest_json(const Dataset& ds, const SplitAssignment& a, const SplitSpec& spec);

/// Copy of `a` with test rows excluded: the design set for tuning.
SplitAssignment design_set(const SplitAssignment& a);

/// k derived assignments over the train+val rows of `design`; fold i tags its
/// validation rows `val` and the remaining design rows `train`. Stratified by
/// label when `label_column` exists. Refuses test-tagged rows (leakage_error)
/// and temporal designs unless `allow_temporal`.
std::vector<SplitAssignment> kfold(const Dataset& ds, const SplitAssignment& design, std::size_t k,
                                   std::uint64_t seed, const std::string& label_column = "label",
                                   bool allow_temporal = false);

inline constexpr std::size_t kSyntheticRow = std::numeric_limits<std::size_t>::max();

/// Rows of one partition together with the lineage needed by fit/apply guards.
struct PartitionData {
    Dataset data;
    Partition tag = Partition::excluded;
    std::vector<std::size_t> row_ids;  // source rows; kSyntheticRow for generated rows
    std::string fingerprint;           // of this partition's original row set
    std::string train_fingerprint;     // of the train partition it is paired with
};

/// Checks that `a` indexes `ds` (lineage_error otherwise) and extracts `p`.
PartitionData take(const Dataset& ds, const SplitAssignment& a, Partition p);

/// A handle over a whole, unsplit dataset. Fitting on it is refused.
PartitionData unpartitioned(const Dataset& ds);

/// Throws leakage_error unless `pd` is a train partition.
void require_train(const PartitionData& pd, std::string_view what);

}  // namespace flowcls::partition
