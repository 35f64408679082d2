#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mzi/evolution.hpp"
#include "mzi/itf.hpp"

namespace mzi {

/// Default relative consistency tolerance (off-diagonals are compared against
/// tol times the largest diagonal entry).
inline constexpr double kConsistencyTol = 1e-10;

/// Projector onto a set of channels at one slot boundary. An expression
/// created as the complement of a decomposition keeps the marker; its channel
/// set is materialized against the occupied channels (and may be empty, the
/// zero projector).
struct ProjectorExpr {
    int slot = 0;
    std::vector<std::string> channels;
    bool complement = false;

    /// "A", "B+C"; "0" for an empty complement.
    std::string label() const;
    bool same_channels(const ProjectorExpr& other) const;
};

/// Channel-space projector matrix; rank = number of channels. Throws
/// UnknownChannel / ChannelNotOccupiedAtSlot.
Eigen::MatrixXcd projector_of(const ProjectorExpr& expr, const InterferometerSpec& spec);

/// Materialized complement of a set of expressions over the channels occupied
/// at `slot`.
ProjectorExpr complement_of(const std::vector<ProjectorExpr>& exprs, int slot,
                            const InterferometerSpec& spec);

/// Orthogonal decomposition of one slot's occupied subspace.
struct Decomposition {
    int slot = 0;
    std::vector<ProjectorExpr> exprs;
};

/// A family of histories: per-slot decompositions (complement auto-added when
/// nonzero) crossed with the detector outcomes. The default-constructed
/// framework has no slot decompositions (detector outcomes only).
class Framework {
public:
    Framework() = default;
    Framework(std::vector<Decomposition> decomps, const InterferometerSpec& spec);

    /// Mini-grammar: `slot3:{A, B+C}; probe:{...}; detector`. `probe` names
    /// the canonical probe slot (the first identity stage); the trailing
    /// `detector` segment is optional and implied.
    static Framework parse(std::string_view text, const InterferometerSpec& spec);

    const std::vector<Decomposition>& decompositions() const { return decomps_; }
    bool trivial() const { return decomps_.empty(); }
    std::string to_string() const;

private:
    std::vector<Decomposition> decomps_;
};

/// One history: projectors at strictly increasing slots, then a detector.
struct History {
    std::vector<ProjectorExpr> steps;
    std::string detector;
};

/// Unnormalized chain ket: alternately evolve (stages plus couplings) and
/// project (history steps, then the detector channel). Squared norm is the
/// history's probability.
Eigen::VectorXcd chain_ket(const History& history, const Simulation& sim);

/// Gram matrix of a framework's chain kets. Entry (i, j) holds
/// <chain_j, chain_i>; the diagonal holds history probabilities. Histories
/// are ordered lexicographically by (slot outcomes, detector).
class DecoherenceMatrix {
public:
    const Eigen::MatrixXcd& matrix() const { return matrix_; }
    /// D(Y, Y') = <chain(Y'), chain(Y)>.
    std::complex<double> entry(size_t y, size_t yprime) const { return matrix_(y, yprime); }
    size_t size() const { return labels_.size(); }
    /// "(B,D1)"-style label per history.
    const std::vector<std::string>& labels() const { return labels_; }
    /// Slot-outcome part of each history's label ("B" or "A&B+C").
    const std::vector<std::string>& outcome_labels() const { return outcome_labels_; }
    const std::vector<std::string>& detector_of() const { return detector_of_; }
    double diagonal_sum() const { return matrix_.diagonal().real().sum(); }

private:
    friend DecoherenceMatrix decoherence_matrix(const Framework&, const Simulation&);

    Eigen::MatrixXcd matrix_;
    std::vector<std::string> labels_;
    std::vector<std::string> outcome_labels_;
    std::vector<std::string> detector_of_;
};

DecoherenceMatrix decoherence_matrix(const Framework& framework, const Simulation& sim);

struct ConsistencyReport {
    bool consistent = true;
    double max_offdiag = 0.0;
    double max_diagonal = 0.0;
    std::pair<std::string, std::string> witness;  // argmax pair when inconsistent
};

/// Medium consistency: every off-diagonal magnitude <= tol * max diagonal.
ConsistencyReport check_consistency(const DecoherenceMatrix& dm, double tol);

/// Pr(outcome | detector) over the framework's slot outcomes. Refuses
/// inconsistent frameworks (InconsistentFramework) and zero-probability
/// detectors (ZeroProbabilityCondition).
std::map<std::string, double> conditional_distribution(const Framework& framework,
                                                       const Simulation& sim,
                                                       const std::string& detector,
                                                       double tol = kConsistencyTol);

/// Common refinement (per-slot projector products). Throws
/// NonCommutingProjectors if any pair fails to commute and
/// IncompatibleFrameworksError when the refined family is inconsistent.
Framework refine_frameworks(const Framework& f1, const Framework& f2, const Simulation& sim,
                            double tol = kConsistencyTol);

// ---------------------------------------------------------------------------
// Single-framework-rule guard

struct GuardQuery {
    std::string framework_id;
    ProjectorExpr expr;
    std::string detector;
};

struct GuardAnswer {
    std::string text;         // rendered query
    bool answered = false;
    double probability = 0.0;
    std::string refusal;      // reason when not answered
};

struct GuardReport {
    std::vector<GuardAnswer> queries;
    std::vector<GuardAnswer> conjunctions;
};

/// Answers each query inside its own framework. A conjunction joining
/// different frameworks is answered only if their refinement exists and is
/// consistent; otherwise it is refused in-band, citing the single framework
/// rule. Never throws for refusals.
GuardReport inference_guard(const std::map<std::string, Framework>& frameworks,
                            const std::vector<GuardQuery>& queries,
                            const std::vector<std::vector<size_t>>& conjunctions,
                            const Simulation& sim, double tol = kConsistencyTol);

}  // namespace mzi
