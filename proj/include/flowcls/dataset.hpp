#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowcls {

/// numeric and categorical columns are model features; metadata columns
/// (timestamps, endpoints) and the label never are.
enum class ColumnKind { numeric, categorical, metadata, label };

std::string_view to_string(ColumnKind kind) noexcept;
ColumnKind column_kind_from_string(std::string_view s);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::string validity_flag;  // name of the 0/1 column qualifying this one, if any

    bool is_text() const noexcept { return kind != ColumnKind::numeric; }
};

/// Numeric columns store doubles (NaN = missing); all other kinds store text
/// (empty = missing).
struct Column {
    ColumnSpec spec;
    std::vector<double> numbers;
    std::vector<std::string> texts;

    std::size_t size() const noexcept { return spec.is_text() ? texts.size() : numbers.size(); }
    bool missing(std::size_t row) const noexcept;
    /// Text rendering of one cell, as written to CSV.
    std::string cell(std::size_t row) const;
};

class Dataset {
public:
    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return columns_.size(); }
    const std::vector<Column>& columns() const noexcept { return columns_; }

    bool has(std::string_view name) const noexcept { return index_of(name).has_value(); }
    std::optional<std::size_t> index_of(std::string_view name) const noexcept;

    /// Throws config_error naming the column when it is absent.
    const Column& column(std::string_view name) const;
    Column& column(std::string_view name);
    const Column& column(std::size_t i) const { return columns_.at(i); }

    const std::vector<double>& numeric(std::string_view name) const;
    const std::vector<std::string>& text(std::string_view name) const;

    /// Appends a column; the first column fixes the row count. Throws
    /// shape_error on length mismatch and config_error on duplicate names.
    void add_numeric(std::string name, std::vector<double> values, std::string validity_flag = {});
    void add_text(std::string name, ColumnKind kind, std::vector<std::string> values);
    void add_column(Column c);

    void drop_column(std::string_view name);
    Dataset select_rows(std::span<const std::size_t> rows) const;
    /// Appends the rows of `other`, which must have the same column names
    /// and kinds in the same order (shape_error otherwise).
    void append_rows(const Dataset& other);

    /// Name of the single label column, if present.
    std::optional<std::string> label_column() const;
    std::vector<std::string> names_of(ColumnKind kind) const;

    std::string provenance;

private:
    std::vector<Column> columns_;
    std::size_t rows_ = 0;
};

/// Shortest round-trip decimal text of a double; "" for NaN.
std::string format_number(double v);
/// Parses a number cell; "" and "nan" map to NaN. Throws value_error.
double parse_number(std::string_view s);

// CSV: RFC 4180 quoting. Lines starting with '#' before the header are
// comments (artifacts carry their config hash there).
std::string csv_escape(std::string_view field);
std::vector<std::string> csv_split(std::string_view line);

std::string schema_json(const Dataset& ds);

/// Writes `<path>` (CSV) and `<path minus .csv>.schema.json`.
void write_dataset(const Dataset& ds, const std::string& csv_path,
                   const std::string& comment = {});
/// Reads a dataset using its schema sidecar.
Dataset read_dataset(const std::string& csv_path);
std::string schema_path_for(const std::string& csv_path);

/// Deterministic CSV text (no comment line), used for hashing.
std::string to_csv(const Dataset& ds, const std::string& comment = {});

}  // namespace flowcls
