#include "flowcls/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "flowcls/error.hpp"

namespace flowcls {

namespace {
constexpr std::string_view kModule = "dataset";
}

std::string_view to_string(ColumnKind kind) noexcept {
    switch (kind) {
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::categorical: return "categorical";
        case ColumnKind::metadata: return "metadata";
        case ColumnKind::label: return "label";
    }
    return "numeric";
}

ColumnKind column_kind_from_string(std::string_view s) {
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "categorical") return ColumnKind::categorical;
    if (s == "metadata") return ColumnKind::metadata;
    if (s == "label") return ColumnKind::label;
    throw Error(ErrorKind::value_error, kModule, "unknown column kind '" + std::string(s) + "'");
}

bool Column::missing(std::size_t row) const noexcept {
    return spec.is_text() ? texts[row].empty() : std::isnan(numbers[row]);
}

std::string Column::cell(std::size_t row) const {
    return spec.is_text() ? texts[row] : format_number(numbers[row]);
}

std::optional<std::size_t> Dataset::index_of(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].spec.name == name) return i;
    }
    return std::nullopt;
}

const Column& Dataset::column(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw Error(ErrorKind::config_error, kModule, "missing column '" + std::string(name) + "'");
    return columns_[*i];
}

Column& Dataset::column(std::string_view name) {
    auto i = index_of(name);
    if (!i) throw Error(ErrorKind::config_error, kModule, "missing column '" + std::string(name) + "'");
    return columns_[*i];
}

const std::vector<double>& Dataset::numeric(std::string_view name) const {
    const Column& c = column(name);
    if (c.spec.is_text()) {
        throw Error(ErrorKind::config_error, kModule, "column '" + std::string(name) + "' is not numeric");
    }
    return c.numbers;
}

const std::vector<std::string>& Dataset::text(std::string_view name) const {
    const Column& c = column(name);
    if (!c.spec.is_text()) {
        throw Error(ErrorKind::config_error, kModule, "column '" + std::string(name) + "' is not text");
    }
    return c.texts;
}

void Dataset::add_column(Column c) {
    if (has(c.spec.name)) {
        throw Error(ErrorKind::config_error, kModule, "duplicate column '" + c.spec.name + "'");
    }
    if (columns_.empty()) {
        rows_ = c.size();
    } else if (c.size() != rows_) {
        throw Error(ErrorKind::shape_error, kModule,
                    "column '" + c.spec.name + "' has " + std::to_string(c.size()) +
                        " rows, dataset has " + std::to_string(rows_));
    }
    columns_.push_back(std::move(c));
}

void Dataset::add_numeric(std::string name, std::vector<double> values, std::string validity_flag) {
    Column c;
    c.spec = {std::move(name), ColumnKind::numeric, std::move(validity_flag)};
    c.numbers = std::move(values);
    add_column(std::move(c));
}

void Dataset::add_text(std::string name, ColumnKind kind, std::vector<std::string> values) {
    if (kind == ColumnKind::numeric) {
        throw Error(ErrorKind::config_error, kModule, "text column '" + name + "' cannot be numeric");
    }
    Column c;
    c.spec = {std::move(name), kind, {}};
    c.texts = std::move(values);
    add_column(std::move(c));
}

void Dataset::drop_column(std::string_view name) {
    auto i = index_of(name);
    if (!i) return;
    columns_.erase(columns_.begin() + static_cast<std::ptrdiff_t>(*i));
    for (auto& c : columns_) {
        if (c.spec.validity_flag == name) c.spec.validity_flag.clear();
    }
    if (columns_.empty()) rows_ = 0;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
    Dataset out;
    out.provenance = provenance;
    out.rows_ = rows.size();
    out.columns_.reserve(columns_.size());
    for (const auto& c : columns_) {
        Column n;
        n.spec = c.spec;
        if (c.spec.is_text()) {
            n.texts.reserve(rows.size());
            for (auto r : rows) n.texts.push_back(c.texts.at(r));
        } else {
            n.numbers.reserve(rows.size());
            for (auto r : rows) n.numbers.push_back(c.numbers.at(r));
        }
        out.columns_.push_back(std::move(n));
    }
    return out;
}

void Dataset::append_rows(const Dataset& other) {
    if (other.cols() != cols()) throw Error(ErrorKind::shape_error, kModule, "append_rows: column count differs");
    for (std::size_t i = 0; i < cols(); ++i) {
        const auto& a = columns_[i].spec;
        const auto& b = other.columns_[i].spec;
        if (a.name != b.name || a.kind != b.kind) {
            throw Error(ErrorKind::shape_error, kModule, "append_rows: column '" + b.name + "' does not line up");
        }
    }
    for (std::size_t i = 0; i < cols(); ++i) {
        auto& dst = columns_[i];
        const auto& src = other.columns_[i];
        if (dst.spec.is_text()) dst.texts.insert(dst.texts.end(), src.texts.begin(), src.texts.end());
        else dst.numbers.insert(dst.numbers.end(), src.numbers.begin(), src.numbers.end());
    }
    rows_ += other.rows_;
}

std::optional<std::string> Dataset::label_column() const {
    for (const auto& c : columns_) {
        if (c.spec.kind == ColumnKind::label) return c.spec.name;
    }
    return std::nullopt;
}

std::vector<std::string> Dataset::names_of(ColumnKind kind) const {
    std::vector<std::string> out;
    for (const auto& c : columns_) {
        if (c.spec.kind == kind) out.push_back(c.spec.name);
    }
    return out;
}

std::string format_number(double v) {
    if (std::isnan(v)) return {};
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

double parse_number(std::string_view s) {
    if (s.empty() || s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw Error(ErrorKind::value_error, kModule, "not a number: '" + std::string(s) + "'");
    }
    return v;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> csv_split(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string schema_json(const Dataset& ds) {
    nlohmann::ordered_json j;
    j["provenance"] = ds.provenance;
    j["rows"] = ds.rows();
    auto& cols = j["columns"] = nlohmann::ordered_json::array();
    for (const auto& c : ds.columns()) {
        nlohmann::ordered_json e;
        e["name"] = c.spec.name;
        e["kind"] = to_string(c.spec.kind);
        if (!c.spec.validity_flag.empty()) e["validity_flag"] = c.spec.validity_flag;
        cols.push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

std::string to_csv(const Dataset& ds, const std::string& comment) {
    std::ostringstream out;
    if (!comment.empty()) out << "# " << comment << '\n';
    for (std::size_t i = 0; i < ds.cols(); ++i) {
        if (i) out << ',';
        out << csv_escape(ds.column(i).spec.name);
    }
    out << '\n';
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        for (std::size_t i = 0; i < ds.cols(); ++i) {
            if (i) out << ',';
            const Column& c = ds.column(i);
            out << (c.spec.is_text() ? csv_escape(c.texts[r]) : format_number(c.numbers[r]));
        }
        out << '\n';
    }
    return out.str();
}

std::string schema_path_for(const std::string& csv_path) {
    std::string base = csv_path;
    if (base.size() > 4 && base.ends_with(".csv")) base.resize(base.size() - 4);
    return base + ".schema.json";
}

void write_dataset(const Dataset& ds, const std::string& csv_path, const std::string& comment) {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io_error, kModule, "cannot write " + csv_path);
    out << to_csv(ds, comment);
    std::ofstream schema(schema_path_for(csv_path), std::ios::binary | std::ios::trunc);
    if (!schema) throw Error(ErrorKind::io_error, kModule, "cannot write schema for " + csv_path);
    schema << schema_json(ds);
}

Dataset read_dataset(const std::string& csv_path) {
    std::ifstream sin(schema_path_for(csv_path));
    if (!sin) throw Error(ErrorKind::io_error, kModule, "missing schema for " + csv_path);
    nlohmann::json schema;
    try {
        sin >> schema;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::value_error, kModule, "bad schema: " + std::string(e.what()));
    }
    std::vector<ColumnSpec> specs;
    for (const auto& e : schema.at("columns")) {
        ColumnSpec s;
        s.name = e.at("name").get<std::string>();
        s.kind = column_kind_from_string(e.at("kind").get<std::string>());
        s.validity_flag = e.value("validity_flag", "");
        specs.push_back(std::move(s));
    }

    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io_error, kModule, "cannot open " + csv_path);
    std::string line;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.starts_with("#")) continue;
        header = csv_split(line);
        break;
    }
    if (header.size() != specs.size()) {
        throw Error(ErrorKind::shape_error, kModule, csv_path + ": header does not match schema");
    }
    std::vector<Column> cols(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (header[i] != specs[i].name) {
            throw Error(ErrorKind::shape_error, kModule,
                        csv_path + ": column " + std::to_string(i) + " is '" + header[i] +
                            "', schema says '" + specs[i].name + "'");
        }
        cols[i].spec = specs[i];
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = csv_split(line);
        if (fields.size() != cols.size()) {
            throw Error(ErrorKind::shape_error, kModule,
                        csv_path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(cols.size()) + " fields");
        }
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i].spec.is_text()) {
                cols[i].texts.push_back(std::move(fields[i]));
            } else {
                cols[i].numbers.push_back(parse_number(fields[i]));
            }
        }
    }
    Dataset ds;
    ds.provenance = schema.value("provenance", "");
    for (auto& c : cols) ds.add_column(std::move(c));
    return ds;
}

}  // namespace flowcls
