#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mzi/itf.hpp"
#include "mzi/probes.hpp"

namespace mzi {

/// Amplitudes over (channel) x (probe bits) at a given slot boundary.
struct JointState {
    Eigen::VectorXcd amplitudes;
    int slot = 0;
};

/// One interferometer + probe configuration with its compiled stages.
/// Immutable after construction; cheap to share.
class Simulation {
public:
    explicit Simulation(InterferometerSpec spec, std::vector<ProbeSpec> probes = {});

    const InterferometerSpec& spec() const { return spec_; }
    const ProbeRegister& reg() const { return reg_; }
    const JointSpace& space() const { return space_; }
    const std::vector<StageUnitary>& stages() const { return stages_; }
    /// Channel-space unitary of one stage (slot in 1..final_slot()).
    const Eigen::MatrixXcd& particle_stage(int slot) const;

    /// |source channel> (x) |0...0> at slot 0 (couplings with slot 0 applied).
    JointState initial_state() const;
    /// Advance one slot: stage unitary, then the couplings parked there.
    void step(JointState& state) const;
    JointState evolve_to(int slot) const;
    /// Full run: the final state over detector channels (x) probe bits.
    JointState evolve() const;

private:
    void apply_couplings_at(int slot, Eigen::VectorXcd& amps) const;

    InterferometerSpec spec_;
    ProbeRegister reg_;
    JointSpace space_;
    std::vector<StageUnitary> stages_;
};

struct Outcome {
    int detector = 0;  // index into detector_labels()
    uint32_t bits = 0;
    double p = 0.0;
};

/// Probabilities below this cannot be told from floating noise (squared
/// amplitudes of order machine epsilon); they are snapped to exactly zero
/// wherever a probability is reported or sampled.
inline constexpr double kProbabilityClamp = 1e-15;

/// Exact Born probabilities over (detector, probe bitstring), cells ordered
/// detector-major then bits ascending. Probabilities below kProbabilityClamp
/// are clamped to exactly zero and can never be sampled.
class OutcomeDistribution {
public:
    OutcomeDistribution(std::vector<Outcome> cells, std::vector<std::string> detector_labels,
                        std::vector<std::string> probe_names, std::vector<int> probe_slots);

    const std::vector<Outcome>& outcomes() const { return cells_; }
    const std::vector<std::string>& detector_labels() const { return detector_labels_; }
    const std::vector<std::string>& probe_names() const { return probe_names_; }
    const std::vector<int>& probe_slots() const { return probe_slots_; }

    double total() const { return total_; }
    double probability(const std::string& detector, uint32_t bits) const;
    /// Pr(probe = value), marginal over everything else.
    double probe_marginal(const std::string& probe, int value) const;
    std::map<std::string, double> detector_marginals() const;

    /// Bit values as text, character k = probe k ("0100" = probe 1 fired).
    std::string bits_string(uint32_t bits) const;

    /// Fingerprint of the (detectors, probes) shape; tables and records from
    /// different configurations refuse to mix.
    uint64_t shape_hash() const { return shape_hash_; }

private:
    std::vector<Outcome> cells_;
    std::vector<std::string> detector_labels_;
    std::vector<std::string> probe_names_;
    std::vector<int> probe_slots_;
    double total_ = 0.0;
    uint64_t shape_hash_ = 0;
};

OutcomeDistribution joint_outcome_distribution(const JointState& state, const Simulation& sim);

/// Detector marginals of the final state; sums to 1.
std::map<std::string, double> detector_distribution(const JointState& state, const Simulation& sim);

/// Detector distribution conditioned on one probe's readout; throws
/// ZeroProbabilityCondition when Pr(probe = value) vanishes.
std::map<std::string, double> conditional_given_probe(const OutcomeDistribution& dist,
                                                      const std::string& probe, int value);

/// One sampled run. trigger_slots lists the coupling slot of each triggered
/// probe (gedanken timer readout), in bit order.
struct RunRecord {
    uint64_t run = 0;
    int detector = 0;
    uint32_t bits = 0;
    std::vector<int> trigger_slots;
    uint64_t config_tag = 0;
};

/// n i.i.d. samples from the exact distribution; run k depends only on
/// (seed, k), so the result is independent of any partitioning of the runs.
std::vector<RunRecord> sample_runs(const OutcomeDistribution& dist, uint64_t n, uint64_t seed);

/// Joint counts over (detector, bitstring) cells.
class CoincidenceTable {
public:
    explicit CoincidenceTable(const OutcomeDistribution& shape);

    uint64_t total_runs() const { return total_; }
    uint64_t count(int detector, uint32_t bits) const;
    uint64_t count(const std::string& detector, uint32_t bits) const;
    const std::vector<uint64_t>& counts() const { return counts_; }
    const std::vector<std::string>& detector_labels() const { return detector_labels_; }
    const std::vector<std::string>& probe_names() const { return probe_names_; }

    void add(int detector, uint32_t bits, uint64_t n = 1);
    /// Associative, commutative; throws MixedConfigurations on shape mismatch.
    void merge(const CoincidenceTable& other);

    std::string bits_string(uint32_t bits) const;
    /// CSV per the interchange format: header `detector,bits,count,frequency`,
    /// bits as `a=0;b=1;...`, frequencies with 17 significant digits, cells in
    /// (detector, bits) order. No data rows when the table is empty.
    std::string to_csv() const;

    uint64_t shape_hash() const { return shape_hash_; }

private:
    std::vector<uint64_t> counts_;
    std::vector<std::string> detector_labels_;
    std::vector<std::string> probe_names_;
    uint64_t total_ = 0;
    uint64_t shape_hash_ = 0;
};

/// Fold records into a table; records must all carry the shape's config tag
/// (MixedConfigurations otherwise).
CoincidenceTable aggregate_coincidences(const std::vector<RunRecord>& records,
                                        const OutcomeDistribution& shape);

/// Sample directly into a table, optionally on several workers. The result is
/// bit-identical for any worker count.
CoincidenceTable sample_table(const OutcomeDistribution& dist, uint64_t n, uint64_t seed,
                              unsigned workers = 1);

}  // namespace mzi
