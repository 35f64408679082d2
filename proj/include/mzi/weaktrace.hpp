#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "mzi/evolution.hpp"
#include "mzi/histories.hpp"

namespace mzi {

/// Presence threshold on |weak value| below which a channel leaves no trace.
inline constexpr double kTraceThreshold = 1e-6;

/// Pre-selected particle state at a slot boundary: U(slot..1)|source>.
/// Probe couplings are ignored (the trace analysis concerns the bare
/// interferometer; probes enter only through the bridge-law numbers).
Eigen::VectorXcd forward_state(const Simulation& sim, int slot);

/// Post-selected particle state pulled back from the detector:
/// U(final..slot+1)^dagger |detector channel>. Unit norm at every slot.
Eigen::VectorXcd backward_state(const Simulation& sim, int slot, const std::string& detector);

/// W = <backward|P|forward> / <backward|forward> at the expression's slot.
/// Throws OrthogonalPostSelection when the pre/post overlap vanishes
/// (|overlap| <= 1e-12).
std::complex<double> weak_value(const Simulation& sim, const ProjectorExpr& expr,
                                const std::string& detector);

struct WeakValueRow {
    int slot = 0;
    std::string channel;
    std::complex<double> value;
    bool present = false;
};

/// Weak values of every occupied channel at every slot for one
/// post-selection, with per-channel presence verdicts (present iff
/// |W| > threshold at some slot the channel is occupied).
struct WeakValueTable {
    std::string post;
    double threshold = kTraceThreshold;
    std::vector<WeakValueRow> rows;  // slot-major, channel order within a slot

    bool channel_present(const std::string& channel) const;
    std::vector<std::string> present_channels() const;
};

WeakValueTable weak_trace_table(const Simulation& sim, const std::string& detector,
                                double threshold = kTraceThreshold);

struct ComparisonRow {
    std::string channel;
    int slot = 0;
    std::complex<double> weak_value;
    bool weak_present = false;
    bool has_ch = false;       // false when no consistent framework covers the channel
    bool ch_present = false;
    std::string ch_verdict;    // "present", "absent (via B+C)", or the refusal note
    bool agree = false;        // meaningful when has_ch
};

/// Probe response check: Pr(probe fired | post) / sin^2(eps) against |W|^2.
struct BridgeEntry {
    std::string label;
    int slot = 0;
    double ratio = 0.0;
    double expected = 0.0;
};

/// Untriggered-sector detector amplitude shift caused by a probe (the
/// back-action a first-order trace argument ignores).
struct DisturbanceEntry {
    std::string probe_on;
    std::string detector;
    std::complex<double> delta;
};

struct ComparisonReport {
    std::string post;
    std::string framework;
    double threshold = kTraceThreshold;
    double eps_ref = 1e-3;
    std::vector<ComparisonRow> rows;
    std::vector<BridgeEntry> bridge;
    std::vector<DisturbanceEntry> disturbance;

    bool all_agree() const;
};

/// Side-by-side weak-trace vs consistent-histories verdicts for one
/// post-selection. The named framework must be consistent
/// (InconsistentFramework otherwise); channels it does not cover fall back to
/// their own single-channel framework when that family is consistent.
ComparisonReport compare_ch_weaktrace(const Simulation& sim, const std::string& detector,
                                      const Framework& framework,
                                      double threshold = kTraceThreshold, double eps_ref = 1e-3);

}  // namespace mzi
