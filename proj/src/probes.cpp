#include "mzi/probes.hpp"

#include <cmath>
#include <set>

namespace mzi {

namespace {

void validate_against_spec(ProbeSpec& probe, const InterferometerSpec& spec) {
    if (probe.targets.empty())
        throw Error(ErrorCode::target_not_occupied, "probe '" + probe.name + "' has no target channels");
    for (const std::string& t : probe.targets) spec.channel_index(t);
    if (probe.slot < 0) {
        probe.slot = spec.default_probe_slot(probe.targets);
        return;
    }
    for (const std::string& t : probe.targets)
        if (!spec.is_occupied(t, probe.slot))
            throw Error(ErrorCode::target_not_occupied,
                        "probe '" + probe.name + "': channel '" + t + "' is not occupied at slot " +
                            std::to_string(probe.slot));
}

}  // namespace

ProbeRegister::ProbeRegister(std::vector<ProbeSpec> probes, const InterferometerSpec& spec)
    : probes_(std::move(probes)) {
    std::set<std::string> names;
    for (ProbeSpec& p : probes_) {
        if (!names.insert(p.name).second)
            throw Error(ErrorCode::duplicate_name, "probe '" + p.name + "' registered twice");
        validate_against_spec(p, spec);
    }
}

int ProbeRegister::bit_of(const std::string& name) const {
    for (size_t i = 0; i < probes_.size(); ++i)
        if (probes_[i].name == name) return static_cast<int>(i);
    throw Error(ErrorCode::unknown_probe, "no probe named '" + name + "'");
}

bool ProbeRegister::has(const std::string& name) const {
    for (const ProbeSpec& p : probes_)
        if (p.name == name) return true;
    return false;
}

JointSpace assemble_joint_space(const InterferometerSpec& spec, const ProbeRegister& reg) {
    return JointSpace{spec.channel_count(), static_cast<int>(reg.size())};
}

void apply_coupling(const ProbeSpec& probe, int bit, const JointSpace& space,
                    const InterferometerSpec& spec, Eigen::VectorXcd& state) {
    const double c = std::cos(probe.epsilon);
    const double s = std::sin(probe.epsilon);
    const uint32_t mask = 1u << bit;
    for (const std::string& name : probe.targets) {
        const int ch = spec.channel_index(name);
        for (uint32_t bits = 0; bits < space.bit_patterns(); ++bits) {
            if (bits & mask) continue;
            const Eigen::Index i0 = space.index(ch, bits);
            const Eigen::Index i1 = space.index(ch, bits | mask);
            const std::complex<double> a0 = state[i0];
            const std::complex<double> a1 = state[i1];
            state[i0] = c * a0 - s * a1;
            state[i1] = s * a0 + c * a1;
        }
    }
}

Eigen::MatrixXcd coupling_unitary(const ProbeSpec& probe, const ProbeRegister& reg,
                                  const InterferometerSpec& spec) {
    const int bit = reg.bit_of(probe.name);  // throws UnknownProbe
    const ProbeSpec& registered = reg.probe(bit);
    const JointSpace space = assemble_joint_space(spec, reg);
    Eigen::MatrixXcd u(space.dim(), space.dim());
    Eigen::VectorXcd column = Eigen::VectorXcd::Zero(space.dim());
    for (Eigen::Index j = 0; j < space.dim(); ++j) {
        column.setZero();
        column[j] = 1.0;
        apply_coupling(registered, bit, space, spec, column);
        u.col(j) = column;
    }
    return u;
}

void apply_particle_unitary(const Eigen::MatrixXcd& u, const JointSpace& space,
                            Eigen::VectorXcd& state) {
    using StateView = Eigen::Map<Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>;
    StateView view(state.data(), space.n_channels, static_cast<Eigen::Index>(space.bit_patterns()));
    view = (u * view).eval();
}

}  // namespace mzi
