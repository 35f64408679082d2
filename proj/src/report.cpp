#include "mzi/report.hpp"

#include <algorithm>
#include <cstdio>

namespace mzi {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

uint64_t fnv1a64(std::string_view text) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string config_digest(std::vector<std::pair<std::string, std::string>> options) {
    std::sort(options.begin(), options.end());
    std::string canonical;
    for (const auto& [k, v] : options) canonical += k + "=" + v + "\n";
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    return buf;
}

namespace {

void escape_into(const std::string& s, std::string& out) {
    out += '"';
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    out += '"';
}

void dump_rec(const nlohmann::ordered_json& j, std::string& out, int indent, int depth) {
    const std::string pad(static_cast<size_t>(indent) * depth, ' ');
    const std::string pad_in(static_cast<size_t>(indent) * (depth + 1), ' ');
    switch (j.type()) {
        case nlohmann::ordered_json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            size_t i = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++i) {
                out += pad_in;
                escape_into(it.key(), out);
                out += ": ";
                dump_rec(it.value(), out, indent, depth + 1);
                if (i + 1 < j.size()) out += ',';
                out += '\n';
            }
            out += pad + "}";
            return;
        }
        case nlohmann::ordered_json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += "[\n";
            for (size_t i = 0; i < j.size(); ++i) {
                out += pad_in;
                dump_rec(j[i], out, indent, depth + 1);
                if (i + 1 < j.size()) out += ',';
                out += '\n';
            }
            out += pad + "]";
            return;
        }
        case nlohmann::ordered_json::value_t::string:
            escape_into(j.get_ref<const std::string&>(), out);
            return;
        case nlohmann::ordered_json::value_t::boolean:
            out += j.get<bool>() ? "true" : "false";
            return;
        case nlohmann::ordered_json::value_t::number_integer:
            out += std::to_string(j.get<int64_t>());
            return;
        case nlohmann::ordered_json::value_t::number_unsigned:
            out += std::to_string(j.get<uint64_t>());
            return;
        case nlohmann::ordered_json::value_t::number_float:
            out += fmt17(j.get<double>());
            return;
        default:
            out += "null";
            return;
    }
}

nlohmann::ordered_json complex_json(const std::complex<double>& z) {
    return nlohmann::ordered_json::array({z.real(), z.imag()});
}

}  // namespace

std::string dump_json17(const nlohmann::ordered_json& doc, int indent) {
    std::string out;
    dump_rec(doc, out, indent, 0);
    out += '\n';
    return out;
}

nlohmann::ordered_json distribution_json(const OutcomeDistribution& dist) {
    nlohmann::ordered_json doc;
    doc["outcomes"] = nlohmann::ordered_json::array();
    for (const Outcome& c : dist.outcomes()) {
        nlohmann::ordered_json cell;
        cell["detector"] = dist.detector_labels()[c.detector];
        cell["bits"] = dist.bits_string(c.bits);
        cell["p"] = c.p;
        doc["outcomes"].push_back(std::move(cell));
    }
    doc["total_p"] = dist.total();
    return doc;
}

nlohmann::ordered_json histories_json(
    const ConsistencyReport& report,
    const std::map<std::string, std::map<std::string, double>>& conditionals) {
    nlohmann::ordered_json doc;
    doc["consistent"] = report.consistent;
    doc["max_offdiag"] = report.max_offdiag;
    if (!report.consistent) {
        doc["witness"] = nlohmann::ordered_json::array({report.witness.first, report.witness.second});
    }
    nlohmann::ordered_json cond = nlohmann::ordered_json::object();
    for (const auto& [det, table] : conditionals) {
        nlohmann::ordered_json row = nlohmann::ordered_json::object();
        for (const auto& [label, p] : table) row[label] = p;
        cond[det] = std::move(row);
    }
    doc["conditionals"] = std::move(cond);
    return doc;
}

nlohmann::ordered_json weak_table_json(const WeakValueTable& table) {
    nlohmann::ordered_json doc;
    doc["post"] = table.post;
    doc["threshold"] = table.threshold;
    doc["rows"] = nlohmann::ordered_json::array();
    for (const WeakValueRow& r : table.rows) {
        nlohmann::ordered_json row;
        row["slot"] = r.slot;
        row["channel"] = r.channel;
        row["weak_value"] = complex_json(r.value);
        row["present"] = r.present;
        doc["rows"].push_back(std::move(row));
    }
    doc["present_channels"] = table.present_channels();
    return doc;
}

nlohmann::ordered_json comparison_json(const ComparisonReport& report) {
    nlohmann::ordered_json doc;
    doc["post"] = report.post;
    doc["framework"] = report.framework;
    doc["threshold"] = report.threshold;
    doc["rows"] = nlohmann::ordered_json::array();
    for (const ComparisonRow& r : report.rows) {
        nlohmann::ordered_json row;
        row["channel"] = r.channel;
        row["slot"] = r.slot;
        row["weak_value"] = complex_json(r.weak_value);
        row["weak_trace"] = r.weak_present ? "present" : "absent";
        row["ch"] = r.ch_verdict;
        if (r.has_ch) row["agree"] = r.agree;
        doc["rows"].push_back(std::move(row));
    }
    doc["bridge"] = nlohmann::ordered_json::array();
    for (const BridgeEntry& b : report.bridge) {
        nlohmann::ordered_json row;
        row["projector"] = b.label;
        row["slot"] = b.slot;
        row["trigger_ratio"] = b.ratio;
        row["weak_value_sq"] = b.expected;
        doc["bridge"].push_back(std::move(row));
    }
    doc["disturbance"] = nlohmann::ordered_json::array();
    for (const DisturbanceEntry& d : report.disturbance) {
        nlohmann::ordered_json row;
        row["probe_on"] = d.probe_on;
        row["detector"] = d.detector;
        row["untriggered_amplitude_shift"] = complex_json(d.delta);
        doc["disturbance"].push_back(std::move(row));
    }
    doc["eps_ref"] = report.eps_ref;
    return doc;
}

}  // namespace mzi
