#include "estrisk/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

namespace estrisk::io {

JsonValue JsonValue::object() {
    JsonValue v;
    v.type_ = Type::object;
    return v;
}

JsonValue JsonValue::array() {
    JsonValue v;
    v.type_ = Type::array;
    return v;
}

JsonValue JsonValue::str(std::string s) {
    JsonValue v;
    v.type_ = Type::string;
    v.string_ = std::move(s);
    return v;
}

JsonValue JsonValue::number(double d) {
    JsonValue v;
    v.type_ = Type::number;
    v.number_ = d;
    return v;
}

JsonValue JsonValue::integer(std::int64_t i) {
    JsonValue v;
    v.type_ = Type::integer;
    v.integer_ = i;
    return v;
}

JsonValue JsonValue::boolean(bool b) {
    JsonValue v;
    v.type_ = Type::boolean;
    v.boolean_ = b;
    return v;
}

JsonValue JsonValue::null() {
    return JsonValue{};
}

JsonValue& JsonValue::set(const std::string& key, JsonValue v) {
    if (type_ != Type::object) throw ComputeError("JsonValue::set on non-object");
    members_.emplace_back(key, std::move(v));
    return *this;
}

JsonValue& JsonValue::push(JsonValue v) {
    if (type_ != Type::array) throw ComputeError("JsonValue::push on non-array");
    elements_.push_back(std::move(v));
    return *this;
}

namespace {

void append_escaped(std::string& out, const std::string& s) {
    out.push_back('"');
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(c);
                }
        }
    }
    out.push_back('"');
}

}  // namespace

void JsonValue::dump_to(std::string& out, int indent, int depth) const {
    const std::string pad(static_cast<std::size_t>(indent) * (depth + 1), ' ');
    const std::string close_pad(static_cast<std::size_t>(indent) * depth, ' ');
    switch (type_) {
        case Type::null_t:
            out += "null";
            break;
        case Type::boolean:
            out += boolean_ ? "true" : "false";
            break;
        case Type::integer:
            out += std::to_string(integer_);
            break;
        case Type::number:
            if (std::isfinite(number_)) {
                out += format_g17(number_);
            } else {
                out += "null";  // JSON has no inf/nan
            }
            break;
        case Type::string:
            append_escaped(out, string_);
            break;
        case Type::array:
            if (elements_.empty()) {
                out += "[]";
                break;
            }
            out += "[\n";
            for (std::size_t i = 0; i < elements_.size(); ++i) {
                out += pad;
                elements_[i].dump_to(out, indent, depth + 1);
                if (i + 1 < elements_.size()) out += ",";
                out += "\n";
            }
            out += close_pad + "]";
            break;
        case Type::object:
            if (members_.empty()) {
                out += "{}";
                break;
            }
            out += "{\n";
            for (std::size_t i = 0; i < members_.size(); ++i) {
                out += pad;
                append_escaped(out, members_[i].first);
                out += ": ";
                members_[i].second.dump_to(out, indent, depth + 1);
                if (i + 1 < members_.size()) out += ",";
                out += "\n";
            }
            out += close_pad + "}";
            break;
    }
}

std::string JsonValue::dump(int indent) const {
    std::string out;
    dump_to(out, indent, 0);
    out += "\n";
    return out;
}

namespace {

// Splits one CSV line; tolerates a trailing CR (CRLF input).
std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    fields.push_back(field);
    return fields;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
    const std::string cell = trim(raw);
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || cell.empty()) {
        throw ConfigError("returns csv: non-numeric cell at row " + std::to_string(row) +
                          ", column " + std::to_string(col) + " (\"" + cell + "\")");
    }
    return value;
}

}  // namespace

ReturnsCsv read_returns_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("returns csv: cannot open \"" + path + "\"");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError("returns csv: empty file \"" + path + "\"");
    }
    ReturnsCsv out;
    for (const auto& name : split_csv_line(line)) {
        out.assets.push_back(trim(name));
    }
    const std::size_t m = out.assets.size();
    if (m == 0) {
        throw ConfigError("returns csv: header row has no columns");
    }

    std::vector<std::vector<double>> rows;
    std::size_t row_number = 1;  // header was row 1
    while (std::getline(in, line)) {
        ++row_number;
        if (trim(line).empty()) continue;  // ignore blank trailing lines
        const auto fields = split_csv_line(line);
        if (fields.size() != m) {
            throw ConfigError("returns csv: row " + std::to_string(row_number) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(m));
        }
        std::vector<double> row(m);
        for (std::size_t j = 0; j < m; ++j) {
            row[j] = parse_cell(fields[j], row_number, j + 1);
        }
        rows.push_back(std::move(row));
    }
    if (rows.size() < 2) {
        throw ConfigError("returns csv: need at least 2 data rows, got " +
                          std::to_string(rows.size()));
    }
    out.rows_by_asset.resize(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            out.rows_by_asset(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][j];
        }
    }
    return out;
}

moments::ReturnsMatrix to_returns_matrix(const ReturnsCsv& csv) {
    return moments::ReturnsMatrix(csv.rows_by_asset.transpose());
}

std::string curve_csv(const sim::ExperimentReport& report) {
    std::string out = "N,method,stat,relative_error_pct,trials_used,trials_flagged\n";
    static const char* kStats[] = {"median", "mean", "q25", "q75"};
    for (const auto& pt : report.curves) {
        const double values[] = {pt.rel_err.median, pt.rel_err.mean, pt.rel_err.q25,
                                 pt.rel_err.q75};
        for (int s = 0; s < 4; ++s) {
            out += std::to_string(pt.n);
            out += ",";
            out += sim::method_name(pt.method);
            out += ",";
            out += kStats[s];
            out += ",";
            out += format_g17(values[s]);
            out += ",";
            out += std::to_string(pt.trials_used);
            out += ",";
            out += std::to_string(pt.trials_flagged);
            out += "\n";
        }
    }
    return out;
}

JsonValue versions_json() {
    JsonValue v = JsonValue::object();
    v.set("estrisk", JsonValue::str(cli::kVersion));
    v.set("eigen", JsonValue::str(std::to_string(EIGEN_WORLD_VERSION) + "." +
                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)));
    return v;
}

std::string digest_hex(std::uint64_t digest) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

namespace {

JsonValue aggregate_json(const sim::Aggregate& a) {
    JsonValue v = JsonValue::object();
    v.set("median", JsonValue::number(a.median));
    v.set("mean", JsonValue::number(a.mean));
    v.set("q25", JsonValue::number(a.q25));
    v.set("q75", JsonValue::number(a.q75));
    return v;
}

double median_of(std::vector<double> values) {
    return sim::aggregate(std::move(values)).median;
}

JsonValue calibration_json(const sim::CalibrationReport& cal) {
    JsonValue root = JsonValue::object();
    const char* target = "none";
    switch (cal.target) {
        case sim::CalibrationTarget::none: target = "none"; break;
        case sim::CalibrationTarget::rho: target = "rho"; break;
        case sim::CalibrationTarget::t_profile: target = "t"; break;
        case sim::CalibrationTarget::both: target = "both"; break;
    }
    root.set("target", JsonValue::str(target));
    JsonValue rho_grid = JsonValue::array();
    for (double r : cal.rho_grid) rho_grid.push(JsonValue::number(r));
    root.set("rho_grid", std::move(rho_grid));
    JsonValue t_grid = JsonValue::array();
    for (double t : cal.t_grid) t_grid.push(JsonValue::number(t));
    root.set("t_grid", std::move(t_grid));

    JsonValue cells = JsonValue::array();
    for (const auto& cell : cal.cells) {
        JsonValue cj = JsonValue::object();
        cj.set("n", JsonValue::integer(cell.n));
        int flagged = 0;
        for (const auto& t : cell.trials) flagged += t.flagged ? 1 : 0;
        const int used = static_cast<int>(cell.trials.size()) - flagged;
        cj.set("trials_used", JsonValue::integer(used));
        cj.set("trials_flagged", JsonValue::integer(flagged));
        if (used > 0) {
            std::vector<double> oracle_rho, oracle_t, oracle_sigma;
            for (const auto& t : cell.trials) {
                if (t.flagged) continue;
                oracle_rho.push_back(t.oracle_rho);
                oracle_t.push_back(t.oracle_t);
                oracle_sigma.push_back(t.oracle_realized_sigma);
            }
            JsonValue oracle = JsonValue::object();
            oracle.set("median_rho", JsonValue::number(median_of(oracle_rho)));
            oracle.set("median_t", JsonValue::number(median_of(oracle_t)));
            oracle.set("median_realized_sigma", JsonValue::number(median_of(oracle_sigma)));
            cj.set("oracle", std::move(oracle));

            JsonValue methods = JsonValue::array();
            for (std::size_t k = 0; k < sim::kMethods.size(); ++k) {
                std::vector<double> rho_v, t_v, err_v, regret_v;
                for (const auto& t : cell.trials) {
                    if (t.flagged) continue;
                    rho_v.push_back(t.chosen_rho[k]);
                    t_v.push_back(t.chosen_t[k]);
                    err_v.push_back(t.rel_err_pct[k]);
                    regret_v.push_back(
                        100.0 * (t.realized_sigma[k] * t.realized_sigma[k] /
                                     (t.oracle_realized_sigma * t.oracle_realized_sigma) -
                                 1.0));
                }
                JsonValue mj = JsonValue::object();
                mj.set("method", JsonValue::str(sim::method_name(sim::kMethods[k])));
                mj.set("median_rho", JsonValue::number(median_of(rho_v)));
                mj.set("median_t", JsonValue::number(median_of(t_v)));
                mj.set("rel_err", aggregate_json(sim::aggregate(std::move(err_v))));
                mj.set("median_regret_pct", JsonValue::number(median_of(regret_v)));
                methods.push(std::move(mj));
            }
            cj.set("methods", std::move(methods));
        }
        cells.push(std::move(cj));
    }
    root.set("cells", std::move(cells));
    return root;
}

}  // namespace

std::string report_json(const sim::ExperimentReport& report, const cli::Config& config) {
    JsonValue root = JsonValue::object();
    // Fully-resolved configuration echo: the run is reproducible from the
    // report alone.
    root.set("config", cli::config_json_value(config));

    JsonValue curves = JsonValue::array();
    for (const auto& pt : report.curves) {
        JsonValue cj = JsonValue::object();
        cj.set("n", JsonValue::integer(pt.n));
        cj.set("method", JsonValue::str(sim::method_name(pt.method)));
        cj.set("median", JsonValue::number(pt.rel_err.median));
        cj.set("mean", JsonValue::number(pt.rel_err.mean));
        cj.set("q25", JsonValue::number(pt.rel_err.q25));
        cj.set("q75", JsonValue::number(pt.rel_err.q75));
        cj.set("trials_used", JsonValue::integer(pt.trials_used));
        cj.set("trials_flagged", JsonValue::integer(pt.trials_flagged));
        curves.push(std::move(cj));
    }
    root.set("scenario_digest", JsonValue::str(digest_hex(report.scenario_digest)));
    root.set("curves", std::move(curves));
    if (report.calibration) {
        root.set("calibration", calibration_json(*report.calibration));
    } else {
        root.set("calibration", JsonValue::null());
    }

    JsonValue flagged = JsonValue::object();
    flagged.set("total", JsonValue::integer(report.trials_flagged_total));
    JsonValue by_n = JsonValue::array();
    for (const auto& cell : report.cells) {
        int cell_flagged = 0;
        for (const auto& t : cell.trials) cell_flagged += t.flagged ? 1 : 0;
        JsonValue fj = JsonValue::object();
        fj.set("n", JsonValue::integer(cell.n));
        fj.set("used", JsonValue::integer(static_cast<int>(cell.trials.size()) - cell_flagged));
        fj.set("flagged", JsonValue::integer(cell_flagged));
        by_n.push(std::move(fj));
    }
    flagged.set("by_n", std::move(by_n));
    root.set("flagged_trials", std::move(flagged));
    root.set("versions", versions_json());
    root.set("seed", JsonValue::integer(static_cast<std::int64_t>(report.spec.scenario.seed)));
    return root.dump();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write \"" + path + "\"");
    }
    out << contents;
    if (!out) {
        throw ConfigError("write failed for \"" + path + "\"");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open \"" + path + "\"");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace estrisk::io
