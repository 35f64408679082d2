#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mzi/itf.hpp"

namespace mzi {

/// Ordered collection of validated probes. Probe k owns bit k of every
/// outcome bitstring (little-endian: bit 0 is the least significant).
class ProbeRegister {
public:
    ProbeRegister() = default;
    /// Validates each probe against the topology: targets must exist and be
    /// simultaneously occupied at the probe's slot, names unique. Probes with
    /// slot < 0 get the default probe slot for their targets.
    ProbeRegister(std::vector<ProbeSpec> probes, const InterferometerSpec& spec);

    size_t size() const { return probes_.size(); }
    bool empty() const { return probes_.empty(); }
    const std::vector<ProbeSpec>& probes() const { return probes_; }
    const ProbeSpec& probe(size_t bit) const { return probes_[bit]; }

    /// Bit index of a probe by name; throws UnknownProbe.
    int bit_of(const std::string& name) const;
    bool has(const std::string& name) const;

private:
    std::vector<ProbeSpec> probes_;
};

/// Basis bookkeeping for the (channels) x (probe qubits) product space.
/// Index = channel * 2^n_probes + bits, i.e. channel-major with probe bits
/// little-endian by register index.
struct JointSpace {
    int n_channels = 0;
    int n_probes = 0;

    Eigen::Index dim() const { return static_cast<Eigen::Index>(n_channels) << n_probes; }
    uint32_t bit_patterns() const { return 1u << n_probes; }
    Eigen::Index index(int channel, uint32_t bits) const {
        return (static_cast<Eigen::Index>(channel) << n_probes) + bits;
    }
};

JointSpace assemble_joint_space(const InterferometerSpec& spec, const ProbeRegister& reg);

/// Dense coupling unitary U = P (x) R(eps) + (I-P) (x) I on the joint space,
/// where P projects onto the probe's target channels and
/// R(eps) = [[cos eps, -sin eps], [sin eps, cos eps]] acts on the probe's
/// qubit (|0> untriggered, |1> triggered), identity on all other probes. The
/// same rotation applies coherently across the whole target set, so a
/// multi-channel probe leaves relative phases inside its subspace untouched.
Eigen::MatrixXcd coupling_unitary(const ProbeSpec& probe, const ProbeRegister& reg,
                                  const InterferometerSpec& spec);

/// In-place application of the coupling of the probe at bit index `bit`.
void apply_coupling(const ProbeSpec& probe, int bit, const JointSpace& space,
                    const InterferometerSpec& spec, Eigen::VectorXcd& state);

/// In-place application of a channel-space unitary, identity on the probes.
void apply_particle_unitary(const Eigen::MatrixXcd& u, const JointSpace& space,
                            Eigen::VectorXcd& state);

}  // namespace mzi
