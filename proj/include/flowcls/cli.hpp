#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace flowcls::cli {

using json = nlohmann::ordered_json;

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "FLOWCLS_CONFIG";

/// The complete configuration with every default filled in.
json default_config();

/// Merges `user` onto the defaults. Unknown keys and type mismatches raise
/// config_error. `model.params`, `grid.params` and `transform.steps` are
/// free-form and replace the default wholesale.
json merge_config(const json& user);

json load_config(const std::string& path);

/// Sets a leaf addressed by a dotted path, e.g. ("meter.idle_timeout", "15").
/// The value is parsed as JSON unless the target is a string.
void apply_override(json& cfg, std::string_view dotted, std::string_view value);

/// Semantic checks beyond the schema (enum values, ranges).
void validate_config(const json& cfg);

/// SHA-256 of the canonical config text.
std::string config_hash(const json& cfg);

/// `<output.root>/run-<first 8 hex digits of the config hash>`.
std::string run_directory(const json& cfg);

enum class Stage { meter, diagnose, prepare, split, transform, train, evaluate, explain };

std::string_view to_string(Stage s) noexcept;
std::vector<Stage> all_stages();

/// Runs pipeline stages against one run directory. Each stage reads the
/// artifacts of earlier stages from the directory and records its inputs,
/// outputs and lineage hashes in `manifest.json`.
class Pipeline {
public:
    Pipeline(json cfg, std::string run_dir, std::ostream& log);

    void run(Stage stage);
    void run_all();

    const std::string& run_dir() const noexcept { return run_dir_; }
    std::string path(const std::string& file) const;
    const std::string& hash() const noexcept { return hash_; }

private:
    void meter();
    void diagnose();
    void prepare();
    void split();
    void transform();
    void train();
    void evaluate();
    void explain();

    std::string comment() const;
    json& stage_entry(Stage s);
    void record_output(Stage s, const std::string& name, const std::string& file);
    void record_input(Stage s, const std::string& name, const std::string& file);
    void save_manifest();

    json cfg_;
    std::string run_dir_;
    std::string hash_;
    std::ostream& log_;
    json manifest_;
};

/// Entry point: `args` excludes the program name. Returns 0 on success,
/// 1 on validation errors (bad config, leakage, lineage) and 2 on data errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowcls::cli
