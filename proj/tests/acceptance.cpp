// Acceptance suite: end-to-end checks of the toolkit against its quantitative
// targets, each verified against the independent path-enumeration oracle where
// a derived number is involved. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "mzi/evolution.hpp"
#include "mzi/histories.hpp"
#include "mzi/itf.hpp"
#include "mzi/weaktrace.hpp"
#include "path_oracle.hpp"

namespace {

int g_failed_criteria = 0;

struct Criterion {
    std::string name;
    std::vector<std::string> failures;
    std::vector<std::string> notes;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    void note(const std::string& text) { notes.push_back(text); }

    ~Criterion() {
        if (failures.empty()) {
            std::printf("[PASS] %s\n", name.c_str());
        } else {
            ++g_failed_criteria;
            std::printf("[FAIL] %s\n", name.c_str());
            for (const std::string& f : failures) std::printf("       - %s\n", f.c_str());
        }
        for (const std::string& n : notes) std::printf("       note: %s\n", n.c_str());
    }
};

const mzi::Simulation& bare_sim() {
    static const mzi::Simulation sim(mzi::default_nested_mzi());
    return sim;
}

mzi::Simulation probed_sim(std::vector<mzi::ProbeSpec> probes) {
    return mzi::Simulation(mzi::default_nested_mzi(), std::move(probes));
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// --------------------------------------------------------------------------

void criterion_1_inner_tuning() {
    Criterion c{"criterion 1: inner tuning, |amp(D->E)| <= 1e-12 and |amp(D->H)| = 1 +- 1e-12"};
    const auto& spec = bare_sim().spec();
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(spec.channel_count());
    v[spec.channel_index("D")] = 1.0;
    for (const mzi::StageUnitary& st : bare_sim().stages())
        if (st.slot >= 2 && st.slot <= 4) v = st.matrix * v;
    const double to_e = std::abs(v[spec.channel_index("E")]);
    const double to_h = std::abs(v[spec.channel_index("H")]);
    c.expect(to_e <= 1e-12, "amp(D->E) = " + fmt(to_e));
    c.expect(std::abs(to_h - 1.0) <= 1e-12, "|amp(D->H)| = " + fmt(to_h));
}

void criterion_2_detector_distribution() {
    Criterion c{"criterion 2: no probes, detector distribution (0.25, 0.25, 0.5) within 1e-10 of oracle"};
    const auto dist = mzi::detector_distribution(bare_sim().evolve(), bare_sim());
    const oracle::Params p;
    for (const char* det : oracle::kDetectors) {
        const double expect = oracle::outcome_probability(p, {}, det, 0);
        c.expect(std::abs(dist.at(det) - expect) <= 1e-10,
                 std::string(det) + " engine " + fmt(dist.at(det)) + " vs oracle " + fmt(expect));
    }
    c.expect(std::abs(dist.at("D1") - 0.25) <= 1e-10, "D1 != 0.25");
    c.expect(std::abs(dist.at("D2") - 0.25) <= 1e-10, "D2 != 0.25");
    c.expect(std::abs(dist.at("D3") - 0.50) <= 1e-10, "D3 != 0.5");
}

void criterion_3_w_probe() {
    Criterion c{"criterion 3: w-probe null on D1 (exact) and Pr(w=1 | D3) = sin^2(eps) within 1e-10"};
    for (const double eps : {0.05, 0.1, 0.3}) {
        const mzi::Simulation sim = probed_sim({{"w", {"B", "C"}, eps, 3}});
        const auto dist = mzi::joint_outcome_distribution(sim.evolve(), sim);
        const double p_d1_w1 = dist.probability("D1", 1);
        c.expect(p_d1_w1 <= 1e-15, "Pr(w=1 & D1) = " + fmt(p_d1_w1) + " at eps " + fmt(eps));
        const double p3 = dist.probability("D3", 0) + dist.probability("D3", 1);
        const double rate = dist.probability("D3", 1) / p3;
        c.expect(std::abs(rate - std::sin(eps) * std::sin(eps)) <= 1e-10,
                 "Pr(w=1|D3) = " + fmt(rate) + " at eps " + fmt(eps));
    }
}

void criterion_4_b_conditional() {
    Criterion c{"criterion 4: given b=1 the detector distribution is (0.25, 0.25, 0.5) within 1e-10"};
    for (const double eps : {0.05, 0.1, 0.3}) {
        const mzi::Simulation sim = probed_sim({{"b", {"B"}, eps, 3}});
        const auto dist = mzi::joint_outcome_distribution(sim.evolve(), sim);
        const auto cond = mzi::conditional_given_probe(dist, "b", 1);
        c.expect(std::abs(cond.at("D1") - 0.25) <= 1e-10, "D1|b=1 at eps " + fmt(eps));
        c.expect(std::abs(cond.at("D2") - 0.25) <= 1e-10, "D2|b=1 at eps " + fmt(eps));
        c.expect(std::abs(cond.at("D3") - 0.50) <= 1e-10, "D3|b=1 at eps " + fmt(eps));
        // half the triggered flux leaves the inner loop on E (reaches D1/D2)
        c.expect(std::abs(cond.at("D1") + cond.at("D2") - 0.5) <= 1e-10,
                 "E-exit share given b=1 at eps " + fmt(eps));
    }
}

void criterion_5_histories() {
    Criterion c{
        "criterion 5: {A,B+C} consistent with Pr(A|D1)=1; {A,B,C} inconsistent, max off-diagonal "
        "1/16 with witness ((B,D1),(C,D1))"};
    const mzi::Framework coarse = mzi::Framework::parse("probe:{A,B+C}", bare_sim().spec());
    const auto dm1 = mzi::decoherence_matrix(coarse, bare_sim());
    const auto rep1 = mzi::check_consistency(dm1, 1e-10);
    c.expect(rep1.consistent && rep1.max_offdiag <= 1e-12,
             "{A,B+C} max off-diagonal " + fmt(rep1.max_offdiag));
    const auto cond = mzi::conditional_distribution(coarse, bare_sim(), "D1");
    c.expect(std::abs(cond.at("A") - 1.0) <= 1e-10, "Pr(A|D1) = " + fmt(cond.at("A")));

    const mzi::Framework fine = mzi::Framework::parse("probe:{A,B,C}", bare_sim().spec());
    const auto dm2 = mzi::decoherence_matrix(fine, bare_sim());
    const auto rep2 = mzi::check_consistency(dm2, 1e-10);
    c.expect(!rep2.consistent, "{A,B,C} reported consistent");
    c.expect(std::abs(rep2.max_offdiag - 1.0 / 16) <= 1e-12,
             "{A,B,C} max off-diagonal " + fmt(rep2.max_offdiag) + ", target 1/16 = 0.0625");
    const bool witness_bc = (rep2.witness.first == "(B,D1)" && rep2.witness.second == "(C,D1)") ||
                            (rep2.witness.first == "(C,D1)" && rep2.witness.second == "(B,D1)");
    c.expect(witness_bc, "witness " + rep2.witness.first + " / " + rep2.witness.second +
                             ", target ((B,D1),(C,D1))");

    // supporting facts, engine and oracle agreeing with each other
    size_t ib = 0, ic = 0, ia = 0;
    for (size_t i = 0; i < dm2.size(); ++i) {
        if (dm2.labels()[i] == "(B,D1)") ib = i;
        if (dm2.labels()[i] == "(C,D1)") ic = i;
        if (dm2.labels()[i] == "(A,D1)") ia = i;
    }
    const oracle::Params p;
    const auto entry_bc = dm2.entry(ib, ic);
    const auto oracle_bc = std::conj(oracle::chain_amplitude(p, {"C"}, 3, "D1")) *
                           oracle::chain_amplitude(p, {"B"}, 3, "D1");
    const auto entry_ab = dm2.entry(ia, ib);
    const auto oracle_ab = std::conj(oracle::chain_amplitude(p, {"B"}, 3, "D1")) *
                           oracle::chain_amplitude(p, {"A"}, 3, "D1");
    c.note("entry ((B,D1),(C,D1)) = " + fmt(entry_bc.real()) + " (oracle " +
           fmt(oracle_bc.real()) + "); entry ((A,D1),(B,D1)) = " + fmt(entry_ab.real()) +
           " (oracle " + fmt(oracle_ab.real()) + ")");
    c.note("the 1/16 target is not the matrix maximum: six pairs -- A vs B/C at D1 and D2, B vs C "
           "at D3 -- carry magnitude 1/8, as the oracle confirms; the measured maximum " +
           fmt(rep2.max_offdiag) + " is reported unweakened above");
}

void criterion_6_single_framework_rule() {
    Criterion c{"criterion 6: refine({A,B+C},{C,A+B}) raises IncompatibleFrameworks; the guard "
                "refuses A|D1 AND C|D1"};
    const mzi::Framework f1 = mzi::Framework::parse("probe:{A,B+C}", bare_sim().spec());
    const mzi::Framework f2 = mzi::Framework::parse("probe:{C,A+B}", bare_sim().spec());
    bool threw = false;
    try {
        mzi::refine_frameworks(f1, f2, bare_sim());
    } catch (const mzi::IncompatibleFrameworksError&) {
        threw = true;
    }
    c.expect(threw, "refinement did not raise IncompatibleFrameworks");

    const std::map<std::string, mzi::Framework> registry{{"f1", f1}, {"f2", f2}};
    const std::vector<mzi::GuardQuery> queries{{"f1", {3, {"A"}, false}, "D1"},
                                               {"f2", {3, {"C"}, false}, "D1"}};
    const mzi::GuardReport guard = mzi::inference_guard(registry, queries, {{0, 1}}, bare_sim());
    c.expect(!guard.conjunctions.empty() && !guard.conjunctions[0].answered &&
                 guard.conjunctions[0].refusal.find("single framework rule") != std::string::npos,
             "conjunction across incompatible frameworks was not refused");
    c.expect(guard.queries[0].answered && std::abs(guard.queries[0].probability - 1.0) <= 1e-10,
             "single-framework query A|D1 not answered as 1");
}

void criterion_7_weak_trace() {
    Criterion c{"criterion 7: weak values post D1 (1, 1/2, -1/2, 0, 0, 0) within 1e-10 of oracle; "
                "trace in {A,B,C}, none in {D,E}"};
    const oracle::Params p;
    struct Case {
        std::set<std::string> channels;
        int slot;
        std::complex<double> target;
    };
    const std::vector<Case> cases = {
        {{"A"}, 3, {1.0, 0.0}},      {{"B"}, 3, {0.5, 0.0}}, {{"C"}, 3, {-0.5, 0.0}},
        {{"B", "C"}, 3, {0.0, 0.0}}, {{"D"}, 1, {0.0, 0.0}}, {{"E"}, 4, {0.0, 0.0}},
    };
    for (const Case& k : cases) {
        const std::vector<std::string> chans(k.channels.begin(), k.channels.end());
        const auto w = mzi::weak_value(bare_sim(), {k.slot, chans, false}, "D1");
        const auto wo = oracle::weak_value(p, k.channels, k.slot, "D1");
        std::string label;
        for (const auto& ch : chans) label += (label.empty() ? "" : "+") + ch;
        c.expect(std::abs(w - wo) <= 1e-10,
                 "W(" + label + ") engine vs oracle: " + fmt(std::abs(w - wo)));
        c.expect(std::abs(w - k.target) <= 1e-10, "W(" + label + ") = " + fmt(w.real()) + "+" +
                                                      fmt(w.imag()) + "i, target " +
                                                      fmt(k.target.real()));
    }
    const mzi::WeakValueTable table = mzi::weak_trace_table(bare_sim(), "D1", 1e-6);
    for (const char* ch : {"A", "B", "C"})
        c.expect(table.channel_present(ch), std::string("no trace in ") + ch);
    for (const char* ch : {"D", "E"})
        c.expect(!table.channel_present(ch), std::string("spurious trace in ") + ch);
}

void criterion_8_bridge_law() {
    Criterion c{"criterion 8: Pr(trigger | Dk)/sin^2(eps) matches |W|^2 to relative 1e-3 at eps = 1e-3"};
    const double eps = 1e-3;
    const double s2 = std::sin(eps) * std::sin(eps);
    for (const char* ch : {"A", "B", "C"}) {
        const mzi::Simulation sim = probed_sim({{"x", {ch}, eps, 3}});
        const auto dist = mzi::joint_outcome_distribution(sim.evolve(), sim);
        for (const char* det : oracle::kDetectors) {
            const double p_det = dist.detector_marginals().at(det);
            if (p_det <= 0.0) continue;
            const double ratio = (dist.probability(det, 1) / p_det) / s2;
            const double expect =
                std::norm(mzi::weak_value(bare_sim(), {3, {ch}, false}, det));
            const std::string label = std::string(ch) + " at " + det;
            if (expect == 0.0)
                c.expect(ratio <= 1e-12, "ratio for " + label + " = " + fmt(ratio));
            else
                c.expect(std::abs(ratio - expect) <= 1e-3 * expect,
                         label + ": ratio " + fmt(ratio) + " vs |W|^2 " + fmt(expect));
        }
    }
}

void criterion_9_sum_rules() {
    Criterion c{"criterion 9: weak-value and decoherence sum rules; distribution sums to 1; norm "
                "conserved at every slot"};
    for (const char* det : oracle::kDetectors) {
        for (int slot = 0; slot <= 5; ++slot) {
            std::complex<double> sum = 0.0;
            for (const std::string& ch : bare_sim().spec().occupied_channels(slot))
                sum += mzi::weak_value(bare_sim(), {slot, {ch}, false}, det);
            c.expect(std::abs(sum - 1.0) <= 1e-10,
                     std::string("weak sum at slot ") + std::to_string(slot) + " post " + det);
        }
    }
    for (const char* fw_text : {"probe:{A,B+C}", "probe:{A,B,C}"}) {
        const auto dm = mzi::decoherence_matrix(
            mzi::Framework::parse(fw_text, bare_sim().spec()), bare_sim());
        c.expect(std::abs(dm.diagonal_sum() - 1.0) <= 1e-10,
                 std::string("diagonal sum of ") + fw_text);
    }
    const mzi::Simulation sim = probed_sim(
        {{"a", {"A"}, 0.1, 3}, {"b", {"B"}, 0.1, 3}, {"c", {"C"}, 0.1, 3}, {"w", {"B", "C"}, 0.1, 3}});
    const auto dist = mzi::joint_outcome_distribution(sim.evolve(), sim);
    c.expect(std::abs(dist.total() - 1.0) <= 1e-10, "joint distribution total " + fmt(dist.total()));

    mzi::JointState state = sim.initial_state();
    c.expect(std::abs(state.amplitudes.norm() - 1.0) <= 1e-12, "norm at slot 0");
    while (state.slot < sim.spec().final_slot()) {
        sim.step(state);
        c.expect(std::abs(state.amplitudes.norm() - 1.0) <= 1e-12,
                 "norm at slot " + std::to_string(state.slot));
    }
}

void criterion_10_monte_carlo() {
    Criterion c{"criterion 10: n=10^6 seed 42 within 3 binomial sigmas per cell; byte-identical "
                "CSV for 1, 2, 8 workers"};
    const uint64_t n = 1000000;
    for (const bool with_probes : {false, true}) {
        const mzi::Simulation sim =
            with_probes ? probed_sim({{"a", {"A"}, 0.1, 3},
                                      {"b", {"B"}, 0.1, 3},
                                      {"c", {"C"}, 0.1, 3},
                                      {"w", {"B", "C"}, 0.1, 3}})
                        : probed_sim({});
        const auto dist = mzi::joint_outcome_distribution(sim.evolve(), sim);
        const mzi::CoincidenceTable t1 = mzi::sample_table(dist, n, 42, 1);
        const mzi::CoincidenceTable t2 = mzi::sample_table(dist, n, 42, 2);
        const mzi::CoincidenceTable t8 = mzi::sample_table(dist, n, 42, 8);
        const std::string tag = with_probes ? " (a,b,c,w at 0.1)" : " (no probes)";
        c.expect(t1.to_csv() == t2.to_csv() && t1.to_csv() == t8.to_csv(),
                 "worker-count dependence" + tag);
        for (const mzi::Outcome& cell : dist.outcomes()) {
            const double freq = static_cast<double>(t1.count(cell.detector, cell.bits)) /
                                static_cast<double>(n);
            const double sigma = std::sqrt(cell.p * (1 - cell.p) / static_cast<double>(n));
            if (std::abs(freq - cell.p) > 3 * sigma)
                c.expect(false, "cell " + dist.detector_labels()[cell.detector] + "/" +
                                    dist.bits_string(cell.bits) + tag + ": freq " + fmt(freq) +
                                    " vs p " + fmt(cell.p) + " (sigma " + fmt(sigma) + ")");
        }
    }
}

void criterion_11_parser() {
    Criterion c{"criterion 11: canonical round-trip; ten mutations hit their error classes"};
    const std::string good = mzi::kNestedMziText;
    const mzi::InterferometerSpec spec = mzi::parse_itf(good);
    c.expect(mzi::parse_itf(mzi::print_itf(spec)) == spec, "round-trip changed the topology");

    auto expect_error = [&](const std::string& label, const std::string& text,
                            mzi::ErrorCode code) {
        try {
            mzi::parse_file(text);
            c.expect(false, label + ": no error raised");
        } catch (const mzi::Error& e) {
            if (e.code() != code)
                c.expect(false, label + ": got " + mzi::to_string(e.code()) + ", wanted " +
                                    mzi::to_string(code));
        }
    };
    auto drop = [&](const std::string& needle) {
        std::string text = good;
        const size_t pos = text.find(needle);
        text.erase(pos, needle.size());
        return text;
    };
    auto swap = [&](const std::string& needle, const std::string& repl) {
        std::string text = good;
        const size_t pos = text.find(needle);
        text.replace(pos, needle.size(), repl);
        return text;
    };

    expect_error("dangling port", drop("chan E: BS3.out2 -> BS4.in2\n"),
                 mzi::ErrorCode::dangling_port);
    expect_error("duplicate name", good + "mirror M2\n", mzi::ErrorCode::duplicate_name);
    expect_error("cycle", swap("chan A: M1.out1 -> BS4.in1", "chan A: M1.out1 -> BS1.in2"),
                 mzi::ErrorCode::not_a_dag);
    std::string no_source = drop("source SRC\n");
    no_source.erase(no_source.find("chan S: SRC.out1 -> BS1.in1\n"),
                    std::string("chan S: SRC.out1 -> BS1.in1\n").size());
    expect_error("missing source", no_source, mzi::ErrorCode::no_source);
    expect_error("bad float", swap("theta 0.7853981633974483\nbs BS2", "theta 0.7eight\nbs BS2"),
                 mzi::ErrorCode::syntax_error);
    expect_error("unknown keyword", good + "polarizer P1\n", mzi::ErrorCode::syntax_error);
    expect_error("unconnected detector", good + "detector D4\n", mzi::ErrorCode::dangling_port);
    expect_error("double-connected port", good + "chan X: SRC.out1 -> BS2.in2\n",
                 mzi::ErrorCode::dangling_port);
    expect_error("bad channel expression", good + "probe w on B++C eps 0.1 slot 3\n",
                 mzi::ErrorCode::syntax_error);
    expect_error("empty file", "", mzi::ErrorCode::no_source);
}

}  // namespace

int main() {
    std::printf("acceptance: nested Mach-Zehnder toolkit\n");
    criterion_1_inner_tuning();
    criterion_2_detector_distribution();
    criterion_3_w_probe();
    criterion_4_b_conditional();
    criterion_5_histories();
    criterion_6_single_framework_rule();
    criterion_7_weak_trace();
    criterion_8_bridge_law();
    criterion_9_sum_rules();
    criterion_10_monte_carlo();
    criterion_11_parser();
    if (g_failed_criteria == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criterion(s) failed\n", g_failed_criteria);
    return 1;
}
