#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowcls/dataset.hpp"
#include "flowcls/partition.hpp"

namespace flowcls::transforms {

using json = nlohmann::ordered_json;
using partition::PartitionData;

enum class Kind {
    standard,
    minmax,
    robust,
    onehot,
    portbin,
    zscore_outlier,
    iqr_outlier,
    undersample,
    smote,
    pca,
};

std::string_view to_string(Kind k) noexcept;
Kind kind_from_string(std::string_view s);
/// Resampling and outlier removal only ever run on the train partition.
bool is_train_only(Kind k) noexcept;

/// Quantile by linear interpolation between order statistics at
/// h = (n-1)p. `sorted` must be ascending and nonempty.
double quantile(std::span<const double> sorted, double p);

/// Numeric columns that are neither one-hot outputs (`name=value`) nor
/// validity flags of another column.
std::vector<std::string> continuous_columns(const Dataset& ds);

enum class PortClass { well_known, registered, dynamic };
std::string_view to_string(PortClass c) noexcept;
/// 0-1023, 1024-49151, 49152-65535. Throws value_error outside [0, 65535].
PortClass bin_port(double port);

struct ApplyStats {
    std::size_t unseen_categories = 0;
    std::size_t removed_rows = 0;
    std::size_t synthetic_rows = 0;
};

/// One fitted step. Parameters live in `params` in their serialized form;
/// `fit_fingerprint` is the train-partition fingerprint of the fit data.
struct FittedTransform {
    Kind kind = Kind::standard;
    json params;
    std::string fit_fingerprint;
    std::string fit_rows_fingerprint;  // of the (possibly reduced) rows actually used
    std::vector<std::string> warnings;

    bool train_only() const noexcept { return is_train_only(kind); }

    /// Replays the step without lineage checks. Train-only steps resample
    /// or filter `ds`; `row_ids` (when given) is kept aligned.
    Dataset apply(const Dataset& ds, ApplyStats* stats = nullptr,
                  std::vector<std::size_t>* row_ids = nullptr) const;

    /// Guarded apply: the partition must pair with the train partition this
    /// step was fitted on (lineage_error), and train-only steps refuse
    /// anything but the train partition (leakage_error).
    PartitionData apply(const PartitionData& pd, ApplyStats* stats = nullptr) const;

    json to_json() const;
    static FittedTransform from_json(const json& j);
};

/// Fits one step described by `spec` ({"kind": ..., options}) on a train
/// partition. Throws leakage_error for any other partition.
FittedTransform fit(const json& spec, const PartitionData& train);

// Direct entry points for individual transforms.
FittedTransform fit_standard(const PartitionData& train, std::vector<std::string> columns = {});
FittedTransform fit_minmax(const PartitionData& train, std::vector<std::string> columns = {});
FittedTransform fit_robust(const PartitionData& train, std::vector<std::string> columns = {});
FittedTransform fit_onehot(const PartitionData& train, std::vector<std::string> columns = {});
FittedTransform fit_zscore_outlier(const PartitionData& train, double threshold = 3.0,
                                   std::vector<std::string> columns = {});
FittedTransform fit_iqr_outlier(const PartitionData& train, double multiplier = 1.5,
                                std::vector<std::string> columns = {});
FittedTransform fit_pca(const PartitionData& train, std::size_t n_components, std::vector<std::string> columns = {});

/// Removes majority rows at random so that no class exceeds ratio x the
/// minority count.
PartitionData undersample(const PartitionData& train, double ratio, std::uint64_t seed,
                          const std::string& label = "label");
/// Oversamples every smaller class to the majority count by interpolating
/// toward one of the k nearest same-class neighbours.
PartitionData smote(const PartitionData& train, std::size_t k, std::uint64_t seed,
                    const std::string& label = "label");

struct FittedChain {
    std::vector<FittedTransform> steps;
    std::string fit_fingerprint;

    /// Applies every step; train-only steps are skipped for val/test.
    PartitionData apply(const PartitionData& pd, ApplyStats* stats = nullptr) const;
    /// Hash of the serialized chain, used for model lineage.
    std::string fingerprint() const;

    json to_json() const;
    static FittedChain from_json(const json& j);
};

struct ChainFit {
    FittedChain chain;
    PartitionData train;  // the transformed train partition
};

/// Fits the steps in order, each on the output of the previous ones.
ChainFit fit_chain(const json& steps, const PartitionData& train);

}  // namespace flowcls::transforms
