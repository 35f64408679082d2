// Command-line front end: validate interferometer files, run exact
// simulations and Monte Carlo coincidence experiments, consistent-histories
// analyses, weak-value tables, trace comparisons, and parameter scans.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mzi/evolution.hpp"
#include "mzi/histories.hpp"
#include "mzi/itf.hpp"
#include "mzi/report.hpp"
#include "mzi/weaktrace.hpp"

namespace {

using nlohmann::ordered_json;

// exit codes: 0 ok, 1 usage/config/validation, 2 I/O, 3 single-framework-rule
// refusal when probabilities were demanded
struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct Refusal : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write '" + path + "'");
    out << text;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t next = s.find(sep, pos);
        parts.push_back(s.substr(pos, next == std::string::npos ? next : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return parts;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t");
    size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// --probes a:A:0.1,b:B:0.1,w:B+C:0.1 with an optional :slot suffix
std::vector<mzi::ProbeSpec> parse_probe_list(const std::string& text) {
    std::vector<mzi::ProbeSpec> probes;
    if (trim(text).empty()) return probes;
    for (const std::string& item : split(text, ',')) {
        const std::vector<std::string> fields = split(trim(item), ':');
        if (fields.size() < 3 || fields.size() > 4)
            throw mzi::Error(mzi::ErrorCode::syntax_error,
                             "probe '" + item + "' must be name:targets:epsilon[:slot]");
        mzi::ProbeSpec p;
        p.name = trim(fields[0]);
        for (const std::string& ch : split(fields[1], '+')) {
            const std::string t = trim(ch);
            if (t.empty())
                throw mzi::Error(mzi::ErrorCode::syntax_error,
                                 "bad channel expression '" + fields[1] + "'");
            p.targets.push_back(t);
        }
        try {
            p.epsilon = std::stod(fields[2]);
            p.slot = fields.size() == 4 ? std::stoi(fields[3]) : -1;
        } catch (const std::exception&) {
            throw mzi::Error(mzi::ErrorCode::syntax_error, "bad number in probe '" + item + "'");
        }
        probes.push_back(std::move(p));
    }
    return probes;
}

struct CommonOpts {
    std::string itf_path;
    std::string probes;
    std::string out_format = "text";
    std::string out_path;
    double tol = mzi::kConsistencyTol;

    mzi::ParsedFile load() const {
        const std::string text = itf_path.empty() ? std::string(mzi::kNestedMziText) : read_file(itf_path);
        mzi::ParsedFile file = mzi::parse_file(text);
        for (mzi::ProbeSpec& p : parse_probe_list(probes)) file.probes.push_back(std::move(p));
        return file;
    }

    std::vector<std::pair<std::string, std::string>> digest_seed(const std::string& cmd) const {
        return {{"command", cmd},
                {"itf", itf_path.empty() ? "<embedded>" : itf_path},
                {"probes", probes},
                {"tol", mzi::fmt17(tol)}};
    }
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_probes = true) {
    cmd->add_option("--itf", o.itf_path, "interferometer file (default: embedded nested layout)");
    if (with_probes)
        cmd->add_option("--probes", o.probes, "probe list name:targets:eps[:slot],...");
    cmd->add_option("--out", o.out_format, "output format: json|csv|text")
        ->check(CLI::IsMember({"json", "csv", "text"}));
    cmd->add_option("--output", o.out_path, "write the report to a file instead of stdout");
    cmd->add_option("--tol", o.tol, "consistency tolerance");
}

std::string render_text_map(const std::map<std::string, double>& m, const char* indent = "  ") {
    std::string out;
    for (const auto& [k, v] : m) out += std::string(indent) + k + ": " + mzi::fmt17(v) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const std::string& path, double tol) {
    const std::string text = read_file(path);
    mzi::ParsedFile file;
    try {
        file = mzi::parse_file(text);
    } catch (const mzi::Error& e) {
        std::cerr << "invalid: " << e.what() << "\n";
        return 1;
    }
    const auto stages = mzi::compile_stages(file.itf);
    const mzi::UnitarityReport report = mzi::validate_unitarity(stages, tol);
    int n_bs = 0, n_mirror = 0;
    for (const mzi::NodeSpec& n : file.itf.nodes()) {
        n_bs += n.kind == mzi::NodeKind::beamsplitter;
        n_mirror += n.kind == mzi::NodeKind::mirror;
    }
    std::cout << "ok: " << file.itf.channel_count() << " channels, " << n_bs << " beamsplitters, "
              << n_mirror << " mirrors, " << file.itf.detectors().size() << " detectors, "
              << file.itf.slot_count() << " slots\n"
              << stages.size() << " stages, unitary to " << mzi::fmt17(report.max_deviation) << "\n";
    if (!file.probes.empty()) std::cout << file.probes.size() << " probes\n";
    if (!report.pass) {
        std::cerr << "invalid: stage " << report.worst_slot << " deviates by "
                  << mzi::fmt17(report.max_deviation) << " (tol " << mzi::fmt17(tol) << ")\n";
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const CommonOpts& opts, const std::string& condition) {
    const mzi::ParsedFile file = opts.load();
    const mzi::Simulation sim(file.itf, file.probes);
    const mzi::OutcomeDistribution dist = mzi::joint_outcome_distribution(sim.evolve(), sim);

    auto digest_kv = opts.digest_seed("simulate");
    digest_kv.emplace_back("condition", condition);
    const std::string digest = mzi::config_digest(digest_kv);

    std::optional<std::pair<std::string, int>> cond;
    if (!condition.empty()) {
        const auto parts = split(condition, '=');
        if (parts.size() != 2 || (trim(parts[1]) != "0" && trim(parts[1]) != "1"))
            throw mzi::Error(mzi::ErrorCode::syntax_error,
                             "--condition must be probe=0 or probe=1");
        cond = {trim(parts[0]), trim(parts[1]) == "1" ? 1 : 0};
    }

    if (opts.out_format == "json") {
        ordered_json doc = mzi::distribution_json(dist);
        doc["detectors"] = ordered_json::object();
        for (const auto& [d, p] : dist.detector_marginals()) doc["detectors"][d] = p;
        if (cond) {
            doc["condition"] = cond->first + "=" + std::to_string(cond->second);
            ordered_json table = ordered_json::object();
            for (const auto& [d, p] : mzi::conditional_given_probe(dist, cond->first, cond->second))
                table[d] = p;
            doc["conditional"] = std::move(table);
        }
        doc["config_digest"] = digest;
        write_output(opts.out_path, mzi::dump_json17(doc));
    } else if (opts.out_format == "csv") {
        std::string csv = "detector,bits,p\n";
        for (const mzi::Outcome& c : dist.outcomes())
            csv += dist.detector_labels()[c.detector] + "," + dist.bits_string(c.bits) + "," +
                   mzi::fmt17(c.p) + "\n";
        write_output(opts.out_path, csv);
    } else {
        std::string out = "# config " + digest + "\n";
        out += "detector marginals:\n" + render_text_map(dist.detector_marginals());
        out += "joint outcomes (detector, bits, p):\n";
        for (const mzi::Outcome& c : dist.outcomes())
            out += "  " + dist.detector_labels()[c.detector] + "  " +
                   (dist.probe_names().empty() ? "-" : dist.bits_string(c.bits)) + "  " +
                   mzi::fmt17(c.p) + "\n";
        out += "total_p: " + mzi::fmt17(dist.total()) + "\n";
        if (cond) {
            out += "conditioned on " + cond->first + "=" + std::to_string(cond->second) + ":\n";
            out += render_text_map(mzi::conditional_given_probe(dist, cond->first, cond->second));
        }
        write_output(opts.out_path, out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// mc

int cmd_mc(const CommonOpts& opts, uint64_t runs, uint64_t seed, unsigned workers) {
    const mzi::ParsedFile file = opts.load();
    const mzi::Simulation sim(file.itf, file.probes);
    const mzi::OutcomeDistribution dist = mzi::joint_outcome_distribution(sim.evolve(), sim);
    const mzi::CoincidenceTable table = mzi::sample_table(dist, runs, seed, workers);

    auto digest_kv = opts.digest_seed("mc");
    digest_kv.emplace_back("runs", std::to_string(runs));
    digest_kv.emplace_back("seed", std::to_string(seed));
    const std::string digest = mzi::config_digest(digest_kv);

    if (opts.out_format == "json") {
        ordered_json doc;
        doc["runs"] = runs;
        doc["seed"] = seed;
        doc["cells"] = ordered_json::array();
        const size_t patterns = size_t{1} << table.probe_names().size();
        for (size_t d = 0; d < table.detector_labels().size(); ++d)
            for (size_t bits = 0; bits < patterns; ++bits) {
                ordered_json cell;
                cell["detector"] = table.detector_labels()[d];
                cell["bits"] = table.bits_string(static_cast<uint32_t>(bits));
                cell["count"] = table.count(static_cast<int>(d), static_cast<uint32_t>(bits));
                doc["cells"].push_back(std::move(cell));
            }
        doc["config_digest"] = digest;
        write_output(opts.out_path, mzi::dump_json17(doc));
    } else if (opts.out_format == "text") {
        std::string out = "# config " + digest + "\n";
        out += "runs: " + std::to_string(table.total_runs()) + "\n";
        out += table.to_csv();
        write_output(opts.out_path, out);
    } else {
        std::cerr << "# config " << digest << "\n";
        write_output(opts.out_path, table.to_csv());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// histories

struct NamedFramework {
    std::string id;
    mzi::Framework framework;
};

std::vector<NamedFramework> parse_frameworks(const std::vector<std::string>& specs,
                                             const mzi::InterferometerSpec& itf) {
    std::vector<NamedFramework> out;
    for (size_t i = 0; i < specs.size(); ++i) {
        std::string id = "f" + std::to_string(i + 1);
        std::string body = specs[i];
        const size_t eq = specs[i].find('=');
        // allow "name=slot3:{...}" (a '=' before any '{' names the framework)
        if (eq != std::string::npos && eq < specs[i].find('{')) {
            id = trim(specs[i].substr(0, eq));
            body = specs[i].substr(eq + 1);
        }
        out.push_back({id, mzi::Framework::parse(body, itf)});
    }
    return out;
}

mzi::GuardQuery parse_guard_query(const std::string& text, const std::vector<NamedFramework>& fws,
                                  const mzi::InterferometerSpec& itf) {
    // fid:{CHANEXPR}[@slot]|DETECTOR
    const size_t bar = text.rfind('|');
    if (bar == std::string::npos)
        throw mzi::Error(mzi::ErrorCode::syntax_error, "query '" + text + "' lacks '| detector'");
    mzi::GuardQuery q;
    q.detector = trim(text.substr(bar + 1));
    std::string lhs = trim(text.substr(0, bar));
    const size_t colon = lhs.find(':');
    if (colon == std::string::npos)
        throw mzi::Error(mzi::ErrorCode::syntax_error, "query '" + text + "' lacks 'framework:'");
    q.framework_id = trim(lhs.substr(0, colon));
    std::string expr = trim(lhs.substr(colon + 1));
    int slot = -1;
    const size_t at = expr.rfind('@');
    if (at != std::string::npos) {
        slot = std::stoi(expr.substr(at + 1));
        expr = trim(expr.substr(0, at));
    }
    if (expr.size() < 2 || expr.front() != '{' || expr.back() != '}')
        throw mzi::Error(mzi::ErrorCode::syntax_error, "query '" + text + "' lacks '{channels}'");
    for (const std::string& ch : split(expr.substr(1, expr.size() - 2), '+')) {
        const std::string t = trim(ch);
        if (t.empty())
            throw mzi::Error(mzi::ErrorCode::syntax_error, "bad channel expression in '" + text + "'");
        q.expr.channels.push_back(t);
    }
    if (slot < 0) {
        for (const NamedFramework& nf : fws)
            if (nf.id == q.framework_id && nf.framework.decompositions().size() == 1)
                slot = nf.framework.decompositions().front().slot;
        if (slot < 0)
            throw mzi::Error(mzi::ErrorCode::syntax_error,
                             "query '" + text + "' needs an explicit @slot");
    }
    q.expr.slot = slot;
    (void)itf;
    return q;
}

int cmd_histories(const CommonOpts& opts, const std::vector<std::string>& framework_specs,
                  const std::string& given, const std::vector<std::string>& combine,
                  const std::vector<std::string>& query_texts,
                  const std::vector<std::string>& conjoin_texts) {
    const mzi::ParsedFile file = opts.load();
    const mzi::Simulation sim(file.itf, file.probes);
    const std::vector<NamedFramework> fws = parse_frameworks(framework_specs, file.itf);
    if (fws.empty())
        throw mzi::Error(mzi::ErrorCode::syntax_error, "histories needs at least one --framework");

    auto digest_kv = opts.digest_seed("histories");
    for (size_t i = 0; i < framework_specs.size(); ++i)
        digest_kv.emplace_back("framework." + std::to_string(i), framework_specs[i]);
    digest_kv.emplace_back("given", given);
    const std::string digest = mzi::config_digest(digest_kv);

    bool refused = false;
    ordered_json doc;
    ordered_json fw_reports = ordered_json::array();

    auto report_for = [&](const mzi::Framework& fw) {
        const mzi::DecoherenceMatrix dm = mzi::decoherence_matrix(fw, sim);
        const mzi::ConsistencyReport rep = mzi::check_consistency(dm, opts.tol);
        std::map<std::string, std::map<std::string, double>> conditionals;
        if (rep.consistent) {
            for (const std::string& det : file.itf.detectors()) {
                try {
                    conditionals[det] = mzi::conditional_distribution(fw, sim, det, opts.tol);
                } catch (const mzi::Error& e) {
                    if (e.code() != mzi::ErrorCode::zero_probability_condition) throw;
                }
            }
            if (!given.empty()) {
                auto keep = conditionals.find(given);
                if (keep == conditionals.end())
                    throw mzi::Error(mzi::ErrorCode::zero_probability_condition,
                                     "Pr(" + given + ") = 0");
                conditionals = {{given, keep->second}};
            }
        } else if (!given.empty()) {
            refused = true;
        }
        return mzi::histories_json(rep, conditionals);
    };

    for (const NamedFramework& nf : fws) {
        ordered_json r = report_for(nf.framework);
        r["id"] = nf.id;
        r["framework"] = nf.framework.to_string();
        fw_reports.push_back(std::move(r));
    }

    if (fws.size() == 1) {
        doc = fw_reports[0];
    } else {
        doc["frameworks"] = std::move(fw_reports);
    }

    if (!combine.empty()) {
        if (combine.size() != 2)
            throw mzi::Error(mzi::ErrorCode::syntax_error, "--combine takes exactly two framework ids");
        auto find = [&](const std::string& id) -> const mzi::Framework& {
            for (const NamedFramework& nf : fws)
                if (nf.id == id) return nf.framework;
            throw mzi::Error(mzi::ErrorCode::syntax_error, "no framework named '" + id + "'");
        };
        try {
            const mzi::Framework refined =
                mzi::refine_frameworks(find(combine[0]), find(combine[1]), sim, opts.tol);
            ordered_json r = report_for(refined);
            r["framework"] = refined.to_string();
            doc["combine"] = std::move(r);
        } catch (const mzi::IncompatibleFrameworksError& e) {
            refused = true;
            doc["combine"] = ordered_json::object();
            doc["combine"]["refused"] =
                std::string("single framework rule: incompatible frameworks cannot be combined (") +
                e.what() + ")";
            std::cerr << "REFUSED: " << doc["combine"]["refused"].get<std::string>() << "\n";
        }
    }

    if (!query_texts.empty() || !conjoin_texts.empty()) {
        std::map<std::string, mzi::Framework> registry;
        for (const NamedFramework& nf : fws) registry.emplace(nf.id, nf.framework);
        std::vector<mzi::GuardQuery> queries;
        std::vector<std::vector<size_t>> conjunctions;
        for (const std::string& t : query_texts)
            queries.push_back(parse_guard_query(t, fws, file.itf));
        for (const std::string& t : conjoin_texts) {
            std::vector<size_t> group;
            size_t pos = 0;
            while (pos < t.size()) {
                size_t andpos = t.find(" AND ", pos);
                const std::string part =
                    trim(t.substr(pos, andpos == std::string::npos ? andpos : andpos - pos));
                if (!part.empty()) {
                    group.push_back(queries.size());
                    queries.push_back(parse_guard_query(part, fws, file.itf));
                }
                if (andpos == std::string::npos) break;
                pos = andpos + 5;
            }
            conjunctions.push_back(std::move(group));
        }
        const mzi::GuardReport guard =
            mzi::inference_guard(registry, queries, conjunctions, sim, opts.tol);
        auto answers_json = [](const std::vector<mzi::GuardAnswer>& answers) {
            ordered_json arr = ordered_json::array();
            for (const mzi::GuardAnswer& a : answers) {
                ordered_json row;
                row["query"] = a.text;
                if (a.answered)
                    row["probability"] = a.probability;
                else
                    row["refused"] = a.refusal;
                arr.push_back(std::move(row));
            }
            return arr;
        };
        const size_t n_singles = query_texts.size();
        std::vector<mzi::GuardAnswer> singles(guard.queries.begin(),
                                              guard.queries.begin() + n_singles);
        doc["queries"] = answers_json(singles);
        doc["conjunctions"] = answers_json(guard.conjunctions);
        for (const mzi::GuardAnswer& a : guard.conjunctions)
            if (!a.answered) {
                refused = true;
                std::cerr << "REFUSED: " << a.text << " -- " << a.refusal << "\n";
            }
    }

    doc["config_digest"] = digest;
    if (opts.out_format == "json") {
        write_output(opts.out_path, mzi::dump_json17(doc));
    } else {
        // text rendering of the same content
        std::string out = "# config " + digest + "\n";
        std::function<void(const ordered_json&, int)> walk = [&](const ordered_json& j, int depth) {
            const std::string pad(2 * static_cast<size_t>(depth), ' ');
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (it.value().is_object() || it.value().is_array()) {
                    out += pad + it.key() + ":\n";
                    if (it.value().is_object()) {
                        walk(it.value(), depth + 1);
                    } else {
                        for (const auto& el : it.value()) {
                            if (el.is_object()) {
                                walk(el, depth + 1);
                                out += "\n";
                            } else {
                                out += pad + "  " + el.dump() + "\n";
                            }
                        }
                    }
                } else {
                    out += pad + it.key() + ": " +
                           (it.value().is_string() ? it.value().get<std::string>()
                            : it.value().is_number_float()
                                ? mzi::fmt17(it.value().get<double>())
                                : it.value().dump()) +
                           "\n";
                }
            }
        };
        walk(doc, 0);
        write_output(opts.out_path, out);
    }
    return refused ? 3 : 0;
}

// ---------------------------------------------------------------------------
// weak / compare

int cmd_weak(const CommonOpts& opts, const std::string& post, double threshold) {
    const mzi::ParsedFile file = opts.load();
    const mzi::Simulation sim(file.itf, file.probes);
    const mzi::WeakValueTable table = mzi::weak_trace_table(sim, post, threshold);

    auto digest_kv = opts.digest_seed("weak");
    digest_kv.emplace_back("post", post);
    digest_kv.emplace_back("threshold", mzi::fmt17(threshold));
    const std::string digest = mzi::config_digest(digest_kv);

    if (opts.out_format == "json") {
        ordered_json doc = mzi::weak_table_json(table);
        doc["config_digest"] = digest;
        write_output(opts.out_path, mzi::dump_json17(doc));
    } else {
        std::string out = "# config " + digest + "\n";
        out += "weak values, post-selected on " + post + " (threshold " + mzi::fmt17(threshold) +
               "):\n";
        char buf[120];
        for (const mzi::WeakValueRow& r : table.rows) {
            std::snprintf(buf, sizeof(buf), "  slot %d  %-4s W = %+.12f %+.12fi  %s\n", r.slot,
                          r.channel.c_str(), r.value.real(), r.value.imag(),
                          r.present ? "present" : "absent");
            out += buf;
        }
        out += "present channels:";
        for (const std::string& ch : table.present_channels()) out += " " + ch;
        out += "\n";
        write_output(opts.out_path, out);
    }
    return 0;
}

int cmd_compare(const CommonOpts& opts, const std::string& post,
                const std::vector<std::string>& framework_specs, double threshold, double eps_ref) {
    const mzi::ParsedFile file = opts.load();
    const mzi::Simulation sim(file.itf, file.probes);
    if (framework_specs.size() != 1)
        throw mzi::Error(mzi::ErrorCode::syntax_error, "compare needs exactly one --framework");
    const mzi::Framework fw = mzi::Framework::parse(framework_specs[0], file.itf);
    const mzi::ComparisonReport report = mzi::compare_ch_weaktrace(sim, post, fw, threshold, eps_ref);

    auto digest_kv = opts.digest_seed("compare");
    digest_kv.emplace_back("post", post);
    digest_kv.emplace_back("framework.0", framework_specs[0]);
    digest_kv.emplace_back("eps_ref", mzi::fmt17(eps_ref));
    const std::string digest = mzi::config_digest(digest_kv);

    if (opts.out_format == "json") {
        ordered_json doc = mzi::comparison_json(report);
        doc["config_digest"] = digest;
        write_output(opts.out_path, mzi::dump_json17(doc));
    } else {
        std::string out = "# config " + digest + "\n";
        out += "weak trace vs consistent histories, post " + post + ", framework " +
               report.framework + "\n";
        char buf[160];
        std::snprintf(buf, sizeof(buf), "  %-5s %-4s %-24s %-10s %-22s %s\n", "chan", "slot",
                      "weak value", "trace", "histories", "agree");
        out += buf;
        for (const mzi::ComparisonRow& r : report.rows) {
            std::snprintf(buf, sizeof(buf), "  %-5s %-4d %+.6f%+.6fi       %-10s %-22s %s\n",
                          r.channel.c_str(), r.slot, r.weak_value.real(), r.weak_value.imag(),
                          r.weak_present ? "present" : "absent", r.ch_verdict.c_str(),
                          r.has_ch ? (r.agree ? "yes" : "NO") : "-");
            out += buf;
        }
        out += "bridge (Pr(fired|" + post + ")/sin^2 eps vs |W|^2, eps = " + mzi::fmt17(eps_ref) +
               "):\n";
        for (const mzi::BridgeEntry& b : report.bridge) {
            std::snprintf(buf, sizeof(buf), "  %-6s slot %-3d ratio %.9f  |W|^2 %.9f\n",
                          b.label.c_str(), b.slot, b.ratio, b.expected);
            out += buf;
        }
        out += "untriggered-sector amplitude shifts at eps_ref:\n";
        for (const mzi::DisturbanceEntry& d : report.disturbance) {
            std::snprintf(buf, sizeof(buf), "  probe on %-6s -> %-3s delta %+.3e%+.3ei\n",
                          d.probe_on.c_str(), d.detector.c_str(), d.delta.real(), d.delta.imag());
            out += buf;
        }
        write_output(opts.out_path, out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// scan

struct ScanParam {
    std::string node;
    std::string param;  // theta | phi
    double lo = 0.0, hi = 0.0;
    int count = 0;
};

ScanParam parse_scan_param(const std::string& text) {
    // NODE.PARAM=lo:hi:count
    const size_t eq = text.find('=');
    const size_t dot = text.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw mzi::Error(mzi::ErrorCode::syntax_error,
                         "--param must be NODE.theta|phi=lo:hi:count, got '" + text + "'");
    ScanParam sp;
    sp.node = trim(text.substr(0, dot));
    sp.param = trim(text.substr(dot + 1, eq - dot - 1));
    const auto range = split(text.substr(eq + 1), ':');
    if (range.size() != 3)
        throw mzi::Error(mzi::ErrorCode::syntax_error, "malformed range in '" + text + "'");
    try {
        sp.lo = std::stod(range[0]);
        sp.hi = std::stod(range[1]);
        sp.count = std::stoi(range[2]);
    } catch (const std::exception&) {
        throw mzi::Error(mzi::ErrorCode::syntax_error, "malformed range in '" + text + "'");
    }
    if (sp.count < 0 || (sp.count > 1 && sp.hi < sp.lo))
        throw mzi::Error(mzi::ErrorCode::syntax_error, "malformed range in '" + text + "'");
    return sp;
}

int cmd_scan(const CommonOpts& opts, const std::vector<std::string>& param_texts,
             const std::vector<std::string>& framework_specs, const std::string& given,
             const std::string& target, double min_prob) {
    const mzi::ParsedFile file = opts.load();
    if (framework_specs.size() != 1)
        throw mzi::Error(mzi::ErrorCode::syntax_error, "scan needs exactly one --framework");
    if (!target.empty() && given.empty())
        throw mzi::Error(mzi::ErrorCode::syntax_error, "--target needs --given");

    std::vector<ScanParam> params;
    for (const std::string& t : param_texts) params.push_back(parse_scan_param(t));
    for (const ScanParam& sp : params) file.itf.node_index(sp.node);  // early name check

    auto digest_kv = opts.digest_seed("scan");
    for (size_t i = 0; i < param_texts.size(); ++i)
        digest_kv.emplace_back("param." + std::to_string(i), param_texts[i]);
    digest_kv.emplace_back("framework.0", framework_specs[0]);
    digest_kv.emplace_back("given", given);
    digest_kv.emplace_back("target", target);
    digest_kv.emplace_back("min_prob", mzi::fmt17(min_prob));
    const std::string digest = mzi::config_digest(digest_kv);

    std::vector<std::string> target_channels;
    for (const std::string& ch : split(target, '+'))
        if (!trim(ch).empty()) target_channels.push_back(trim(ch));

    uint64_t evaluated = 0;
    ordered_json hits = ordered_json::array();
    std::vector<int> odometer(params.size(), 0);
    bool done = params.empty() ? false : false;
    bool any_grid = true;
    for (const ScanParam& sp : params)
        if (sp.count == 0) any_grid = false;

    while (any_grid) {
        mzi::InterferometerSpec spec = file.itf;
        ordered_json point = ordered_json::object();
        for (size_t k = 0; k < params.size(); ++k) {
            const ScanParam& sp = params[k];
            const double v = sp.count == 1
                                 ? sp.lo
                                 : sp.lo + (sp.hi - sp.lo) * odometer[k] / (sp.count - 1);
            spec = mzi::with_parameter(spec, sp.node, sp.param, v);
            point[sp.node + "." + sp.param] = v;
        }
        ++evaluated;

        const mzi::Simulation sim(spec, file.probes);
        const mzi::Framework fw = mzi::Framework::parse(framework_specs[0], spec);
        const mzi::ConsistencyReport rep =
            mzi::check_consistency(mzi::decoherence_matrix(fw, sim), opts.tol);
        bool hit = rep.consistent;
        double prob = 0.0;
        if (hit && !target_channels.empty()) {
            try {
                const auto cond = mzi::conditional_distribution(fw, sim, given, opts.tol);
                // match the outcome whose channel set equals the target
                const mzi::ProjectorExpr want{0, target_channels, false};
                hit = false;
                for (const mzi::Decomposition& d : fw.decompositions()) {
                    for (const mzi::ProjectorExpr& e : d.exprs) {
                        if (!e.same_channels(want) || !cond.count(e.label())) continue;
                        prob = cond.at(e.label());
                        hit = prob >= min_prob;
                    }
                }
            } catch (const mzi::Error&) {
                hit = false;
            }
        }
        if (hit) {
            ordered_json row;
            row["params"] = point;
            row["max_offdiag"] = rep.max_offdiag;
            if (!target_channels.empty()) row["prob"] = prob;
            hits.push_back(std::move(row));
        }

        done = true;
        for (size_t k = params.size(); k-- > 0;) {
            if (++odometer[k] < params[k].count) {
                done = false;
                break;
            }
            odometer[k] = 0;
        }
        if (done || params.empty()) break;
    }

    ordered_json doc;
    doc["evaluated"] = evaluated;
    doc["hits"] = std::move(hits);
    doc["config_digest"] = digest;
    if (opts.out_format == "json") {
        write_output(opts.out_path, mzi::dump_json17(doc));
    } else {
        std::string out = "# config " + digest + "\n";
        out += "evaluated " + std::to_string(evaluated) + " grid points, " +
               std::to_string(doc["hits"].size()) + " hits\n";
        for (const auto& h : doc["hits"]) {
            out += "  hit:";
            for (auto it = h["params"].begin(); it != h["params"].end(); ++it)
                out += " " + it.key() + "=" + mzi::fmt17(it.value().get<double>());
            out += "  max_offdiag=" + mzi::fmt17(h["max_offdiag"].get<double>());
            if (h.contains("prob")) out += " prob=" + mzi::fmt17(h["prob"].get<double>());
            out += "\n";
        }
        write_output(opts.out_path, out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nested Mach-Zehnder interferometer toolkit: exact probe/coincidence statistics, "
                 "consistent-histories inference, weak values"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "read options from a key=value file");

    // validate
    auto* validate = app.add_subcommand("validate", "parse and check an interferometer file");
    std::string validate_path;
    double validate_tol = 1e-12;
    validate->add_option("path", validate_path, "interferometer file")->required();
    validate->add_option("--tol", validate_tol, "unitarity tolerance");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "exact outcome distribution");
    CommonOpts sim_opts;
    std::string condition;
    add_common(simulate, sim_opts);
    simulate->add_option("--condition", condition, "condition detector table on probe=0|1");

    // mc
    auto* mc = app.add_subcommand("mc", "Monte Carlo coincidence runs (CSV)");
    CommonOpts mc_opts;
    mc_opts.out_format = "csv";
    uint64_t runs = 0, seed = 0;
    unsigned workers = 1;
    add_common(mc, mc_opts);
    mc->add_option("--runs", runs, "number of runs")->required();
    mc->add_option("--seed", seed, "RNG seed")->required();
    mc->add_option("--workers", workers, "worker threads (output is identical for any count)");

    // histories
    auto* histories = app.add_subcommand("histories", "consistency checks and conditional inference");
    CommonOpts hist_opts;
    std::vector<std::string> framework_specs, combine, query_texts, conjoin_texts;
    std::string given;
    add_common(histories, hist_opts);
    histories->add_option("--framework", framework_specs,
                          "framework spec, e.g. \"probe:{A,B+C}\" or \"name=slot3:{A,B,C}\"");
    histories->add_option("--given", given, "condition on this detector");
    histories->add_option("--combine", combine, "refine two named frameworks")->expected(2);
    histories->add_option("--query", query_texts, "conditional query \"f1:{A}|D1\"");
    histories->add_option("--conjoin", conjoin_texts,
                          "conjunction \"f1:{A}|D1 AND f2:{C}|D1\" (guarded)");

    // weak
    auto* weak = app.add_subcommand("weak", "weak-value table for a post-selection");
    CommonOpts weak_opts;
    std::string post;
    double threshold = mzi::kTraceThreshold;
    add_common(weak, weak_opts);
    weak->add_option("--post", post, "post-selection detector")->required();
    weak->add_option("--threshold", threshold, "|W| presence threshold");

    // compare
    auto* compare = app.add_subcommand("compare", "weak trace vs consistent histories");
    CommonOpts cmp_opts;
    std::string cmp_post;
    std::vector<std::string> cmp_framework;
    double cmp_threshold = mzi::kTraceThreshold;
    double eps_ref = 1e-3;
    add_common(compare, cmp_opts);
    compare->add_option("--post", cmp_post, "post-selection detector")->required();
    compare->add_option("--framework", cmp_framework, "histories framework");
    compare->add_option("--threshold", cmp_threshold, "|W| presence threshold");
    compare->add_option("--eps-ref", eps_ref, "probe strength for the bridge-law numbers");

    // scan
    auto* scan = app.add_subcommand("scan", "grid scan of beamsplitter parameters");
    CommonOpts scan_opts;
    std::vector<std::string> scan_params, scan_framework;
    std::string scan_given, scan_target;
    double min_prob = 0.999;
    add_common(scan, scan_opts);
    scan->add_option("--param", scan_params, "NODE.theta|phi=lo:hi:count")->required();
    scan->add_option("--framework", scan_framework, "framework the predicate checks");
    scan->add_option("--given", scan_given, "detector for the probability predicate");
    scan->add_option("--target", scan_target, "channel expression, e.g. C or A+B");
    scan->add_option("--min-prob", min_prob, "probability threshold for a hit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (validate->parsed()) return cmd_validate(validate_path, validate_tol);
        if (simulate->parsed()) return cmd_simulate(sim_opts, condition);
        if (mc->parsed()) return cmd_mc(mc_opts, runs, seed, workers);
        if (histories->parsed())
            return cmd_histories(hist_opts, framework_specs, given, combine, query_texts,
                                 conjoin_texts);
        if (weak->parsed()) return cmd_weak(weak_opts, post, threshold);
        if (compare->parsed())
            return cmd_compare(cmp_opts, cmp_post, cmp_framework, cmp_threshold, eps_ref);
        if (scan->parsed())
            return cmd_scan(scan_opts, scan_params, scan_framework, scan_given, scan_target,
                            min_prob);
    } catch (const IoFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Refusal& e) {
        std::cerr << "REFUSED: " << e.what() << "\n";
        return 3;
    } catch (const mzi::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
