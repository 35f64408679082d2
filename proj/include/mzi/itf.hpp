#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mzi/error.hpp"

namespace mzi {

enum class NodeKind { source, beamsplitter, mirror, detector };

enum class Port { in1, in2, out1, out2 };

const char* to_string(NodeKind kind);
const char* to_string(Port port);

struct PortRef {
    std::string node;
    Port port = Port::in1;

    bool operator==(const PortRef&) const = default;
};

/// One optical element. theta/phi are meaningful for beamsplitters only;
/// the transfer convention is
///   out1 = cos(theta) in1 + i sin(theta) in2
///   out2 = e^{i phi} (i sin(theta) in1 + cos(theta) in2)
/// with 0 <= theta <= pi/2. Mirrors pass their input through with
/// coefficient 1.
struct NodeSpec {
    std::string name;
    NodeKind kind = NodeKind::mirror;
    double theta = 0.0;
    double phi = 0.0;

    bool operator==(const NodeSpec&) const = default;
};

struct ChannelSpec {
    std::string name;
    PortRef from;
    PortRef to;

    bool operator==(const ChannelSpec&) const = default;
};

/// A weakly coupled qubit probe. `targets` is the channel set the probe
/// watches ({B} for a channel probe, {B, C} for the subspace probe); the
/// coupling rotates the probe qubit by `epsilon` when the particle occupies
/// any target channel, coherently over the whole set.
struct ProbeSpec {
    std::string name;
    std::vector<std::string> targets;
    double epsilon = 0.0;
    int slot = -1;

    bool operator==(const ProbeSpec&) const = default;
};

/// Validated interferometer topology with a time-slot assignment.
///
/// Slots: boundary 0 holds the freshly emitted source state; stages
/// 1..slot_count()-1 each apply one compiled unitary. Nodes are assigned to
/// stages by longest-path rank, with mirrors folded into the adjacent
/// beamsplitter stage (after their producer when fed from an out2 port,
/// before their consumer otherwise), so a mirror's two channel segments never
/// straddle a slot boundary both at once. Vacated ranks remain as identity
/// stages; for the canonical nested layout this leaves the empty probe stage
/// between the inner beamsplitters.
class InterferometerSpec {
public:
    const std::vector<NodeSpec>& nodes() const { return nodes_; }
    const std::vector<ChannelSpec>& channels() const { return channels_; }
    /// Detector node names in declaration order (D1, D2, ...).
    const std::vector<std::string>& detectors() const { return detectors_; }

    int node_index(const std::string& name) const;
    bool has_node(const std::string& name) const { return node_index_.count(name) != 0; }
    const NodeSpec& node(const std::string& name) const { return nodes_[node_index(name)]; }

    /// Index of a channel in the particle basis; throws UnknownChannel.
    int channel_index(const std::string& name) const;
    bool has_channel(const std::string& name) const { return channel_index_.count(name) != 0; }
    int channel_count() const { return static_cast<int>(channels_.size()); }

    /// Stage index a node acts at (after mirror folding). Detectors have no
    /// stage and return slot_count().
    int slot_of(const std::string& node) const;
    /// Number of time slots (boundaries 0..slot_count()-1).
    int slot_count() const { return slot_count_; }
    int final_slot() const { return slot_count_ - 1; }

    /// Channel the source emits into.
    const std::string& source_channel() const { return source_channel_; }
    /// Channel consumed by the named detector; throws UnknownChannel.
    const std::string& detector_channel(const std::string& detector) const;

    /// True when the channel carries amplitude at boundary `slot` (produced
    /// at or before it, not yet consumed; detector channels stay occupied).
    bool is_occupied(const std::string& channel, int slot) const;
    std::vector<std::string> occupied_channels(int slot) const;

    /// Slot at which a probe on `targets` couples by default: the first
    /// identity stage where all targets are occupied, else the first slot
    /// where they all are. Throws TargetNotOccupiedAtSlot if none exists.
    int default_probe_slot(const std::vector<std::string>& targets) const;

    /// Node names acting at a stage, in topological order.
    const std::vector<std::string>& stage_nodes(int slot) const;

    bool operator==(const InterferometerSpec& other) const {
        return nodes_ == other.nodes_ && channels_ == other.channels_;
    }

private:
    friend class ItfBuilder;

    std::vector<NodeSpec> nodes_;
    std::vector<ChannelSpec> channels_;
    std::vector<std::string> detectors_;
    std::map<std::string, int> node_index_;
    std::map<std::string, int> channel_index_;
    std::map<std::string, int> node_slot_;
    std::vector<std::vector<std::string>> stage_nodes_;  // by stage, topo order
    std::vector<int> produced_at_;                       // per channel
    std::vector<int> consumed_at_;                       // per channel; INT_MAX for detectors
    std::string source_channel_;
    std::map<std::string, std::string> detector_channel_;
    int slot_count_ = 0;
};

struct ParsedFile {
    InterferometerSpec itf;
    std::vector<ProbeSpec> probes;
};

/// Parse the line-oriented interferometer DSL. Statements:
///   source ID | bs ID theta FLOAT [phi FLOAT] | mirror ID | detector ID
///   chan ID: NODE.PORT -> NODE.PORT
///   probe ID on CHANEXPR eps FLOAT [slot INT]
/// '#' starts a comment. Throws ParseError (SyntaxError with line/column) or
/// Error with DanglingPort / DuplicateName / NotADag / NoSource.
ParsedFile parse_file(std::string_view text);

/// parse_file restricted to the topology (probe lines still validated).
InterferometerSpec parse_itf(std::string_view text);

/// Canonical formatting; parse(print(spec)) == spec.
std::string print_itf(const InterferometerSpec& spec, const std::vector<ProbeSpec>& probes = {});

/// The canonical nested Mach-Zehnder layout, all theta = pi/4, phi = 0.
/// Tuned so the inner loop sends channel D entirely to H and nothing to E.
InterferometerSpec default_nested_mzi();

/// DSL text default_nested_mzi() is parsed from (also shipped as
/// data/nested_mzi.itf).
extern const char* const kNestedMziText;

/// Copy of a spec with one beamsplitter parameter ("theta" or "phi")
/// replaced; used by parameter scans.
InterferometerSpec with_parameter(const InterferometerSpec& spec, const std::string& node,
                                  const std::string& param, double value);

/// Unitary applied at one time slot, on the channel basis.
struct StageUnitary {
    int slot = 0;
    Eigen::MatrixXcd matrix;
};

/// One unitary per stage 1..slot_count()-1, in slot order. Stages with no
/// nodes are identities.
std::vector<StageUnitary> compile_stages(const InterferometerSpec& spec);

struct StageCheck {
    int slot = 0;
    double deviation = 0.0;  // max |(U†U - I)_ij|
    bool pass = true;
};

struct UnitarityReport {
    bool pass = true;
    double max_deviation = 0.0;
    int worst_slot = -1;
    std::vector<StageCheck> stages;
};

UnitarityReport validate_unitarity(const std::vector<StageUnitary>& stages, double tol);

}  // namespace mzi
