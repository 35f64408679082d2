#include "mzi/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include "mzi/rng.hpp"

namespace mzi {

namespace {

uint64_t fnv1a(std::string_view text, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t hash_shape(const std::vector<std::string>& detectors, const std::vector<std::string>& probes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const std::string& d : detectors) h = fnv1a(d + ";", h);
    h = fnv1a("|", h);
    for (const std::string& p : probes) h = fnv1a(p + ";", h);
    return h;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Simulation

Simulation::Simulation(InterferometerSpec spec, std::vector<ProbeSpec> probes)
    : spec_(std::move(spec)),
      reg_(std::move(probes), spec_),
      space_(assemble_joint_space(spec_, reg_)),
      stages_(compile_stages(spec_)) {}

const Eigen::MatrixXcd& Simulation::particle_stage(int slot) const {
    if (slot < 1 || slot > spec_.final_slot())
        throw Error(ErrorCode::channel_not_occupied, "no stage at slot " + std::to_string(slot));
    return stages_[slot - 1].matrix;
}

void Simulation::apply_couplings_at(int slot, Eigen::VectorXcd& amps) const {
    for (size_t bit = 0; bit < reg_.size(); ++bit)
        if (reg_.probe(bit).slot == slot)
            apply_coupling(reg_.probe(bit), static_cast<int>(bit), space_, spec_, amps);
}

JointState Simulation::initial_state() const {
    JointState state{Eigen::VectorXcd::Zero(space_.dim()), 0};
    state.amplitudes[space_.index(spec_.channel_index(spec_.source_channel()), 0)] = 1.0;
    apply_couplings_at(0, state.amplitudes);
    return state;
}

void Simulation::step(JointState& state) const {
    const int slot = state.slot + 1;
    apply_particle_unitary(particle_stage(slot), space_, state.amplitudes);
    apply_couplings_at(slot, state.amplitudes);
    state.slot = slot;
}

JointState Simulation::evolve_to(int slot) const {
    JointState state = initial_state();
    while (state.slot < slot) step(state);
    return state;
}

JointState Simulation::evolve() const { return evolve_to(spec_.final_slot()); }

// ---------------------------------------------------------------------------
// Distributions

OutcomeDistribution::OutcomeDistribution(std::vector<Outcome> cells,
                                         std::vector<std::string> detector_labels,
                                         std::vector<std::string> probe_names,
                                         std::vector<int> probe_slots)
    : cells_(std::move(cells)),
      detector_labels_(std::move(detector_labels)),
      probe_names_(std::move(probe_names)),
      probe_slots_(std::move(probe_slots)) {
    for (Outcome& c : cells_) {
        if (c.p < kProbabilityClamp) c.p = 0.0;
        total_ += c.p;
    }
    shape_hash_ = hash_shape(detector_labels_, probe_names_);
}

double OutcomeDistribution::probability(const std::string& detector, uint32_t bits) const {
    for (size_t d = 0; d < detector_labels_.size(); ++d)
        if (detector_labels_[d] == detector) {
            const size_t patterns = size_t{1} << probe_names_.size();
            return cells_[d * patterns + bits].p;
        }
    throw Error(ErrorCode::unknown_channel, "unknown detector '" + detector + "'");
}

double OutcomeDistribution::probe_marginal(const std::string& probe, int value) const {
    int bit = -1;
    for (size_t i = 0; i < probe_names_.size(); ++i)
        if (probe_names_[i] == probe) bit = static_cast<int>(i);
    if (bit < 0) throw Error(ErrorCode::unknown_probe, "no probe named '" + probe + "'");
    double p = 0.0;
    for (const Outcome& c : cells_)
        if (static_cast<int>((c.bits >> bit) & 1u) == value) p += c.p;
    return p;
}

std::map<std::string, double> OutcomeDistribution::detector_marginals() const {
    std::map<std::string, double> out;
    for (const std::string& d : detector_labels_) out[d] = 0.0;
    for (const Outcome& c : cells_) out[detector_labels_[c.detector]] += c.p;
    return out;
}

std::string OutcomeDistribution::bits_string(uint32_t bits) const {
    std::string s(probe_names_.size(), '0');
    for (size_t k = 0; k < probe_names_.size(); ++k)
        if (bits & (1u << k)) s[k] = '1';
    return s;
}

OutcomeDistribution joint_outcome_distribution(const JointState& state, const Simulation& sim) {
    if (state.slot != sim.spec().final_slot())
        throw Error(ErrorCode::channel_not_occupied, "state is not at the final slot");
    const JointSpace& space = sim.space();
    std::vector<Outcome> cells;
    std::vector<std::string> detectors = sim.spec().detectors();
    cells.reserve(detectors.size() * space.bit_patterns());
    for (size_t d = 0; d < detectors.size(); ++d) {
        const int ch = sim.spec().channel_index(sim.spec().detector_channel(detectors[d]));
        for (uint32_t bits = 0; bits < space.bit_patterns(); ++bits) {
            const double p = std::norm(state.amplitudes[space.index(ch, bits)]);
            cells.push_back({static_cast<int>(d), bits, p});
        }
    }
    std::vector<std::string> probe_names;
    std::vector<int> probe_slots;
    for (const ProbeSpec& p : sim.reg().probes()) {
        probe_names.push_back(p.name);
        probe_slots.push_back(p.slot);
    }
    return OutcomeDistribution(std::move(cells), std::move(detectors), std::move(probe_names),
                               std::move(probe_slots));
}

std::map<std::string, double> detector_distribution(const JointState& state, const Simulation& sim) {
    return joint_outcome_distribution(state, sim).detector_marginals();
}

std::map<std::string, double> conditional_given_probe(const OutcomeDistribution& dist,
                                                      const std::string& probe, int value) {
    const double denom = dist.probe_marginal(probe, value);
    if (denom <= 0.0)
        throw Error(ErrorCode::zero_probability_condition,
                    "Pr(" + probe + "=" + std::to_string(value) + ") = 0");
    int bit = 0;
    for (size_t i = 0; i < dist.probe_names().size(); ++i)
        if (dist.probe_names()[i] == probe) bit = static_cast<int>(i);
    std::map<std::string, double> out;
    for (const std::string& d : dist.detector_labels()) out[d] = 0.0;
    for (const Outcome& c : dist.outcomes())
        if (static_cast<int>((c.bits >> bit) & 1u) == value)
            out[dist.detector_labels()[c.detector]] += c.p;
    for (auto& [k, v] : out) v /= denom;
    return out;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

// Cumulative sums over the distribution's cells in their canonical order.
struct CellSampler {
    explicit CellSampler(const OutcomeDistribution& dist) {
        cdf.reserve(dist.outcomes().size());
        double acc = 0.0;
        for (const Outcome& c : dist.outcomes()) {
            acc += c.p;
            cdf.push_back(acc);
        }
        total = acc;
    }

    size_t pick(double u) const {
        const double x = u * total;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
        return std::min<size_t>(static_cast<size_t>(it - cdf.begin()), cdf.size() - 1);
    }

    std::vector<double> cdf;
    double total = 0.0;
};

}  // namespace

std::vector<RunRecord> sample_runs(const OutcomeDistribution& dist, uint64_t n, uint64_t seed) {
    const CellSampler sampler(dist);
    const CounterRng rng(seed);
    std::vector<RunRecord> records;
    records.reserve(n);
    for (uint64_t k = 0; k < n; ++k) {
        const Outcome& cell = dist.outcomes()[sampler.pick(rng.uniform(k))];
        RunRecord rec{k, cell.detector, cell.bits, {}, dist.shape_hash()};
        for (size_t bit = 0; bit < dist.probe_names().size(); ++bit)
            if (cell.bits & (1u << bit)) rec.trigger_slots.push_back(dist.probe_slots()[bit]);
        records.push_back(std::move(rec));
    }
    return records;
}

CoincidenceTable::CoincidenceTable(const OutcomeDistribution& shape)
    : counts_(shape.outcomes().size(), 0),
      detector_labels_(shape.detector_labels()),
      probe_names_(shape.probe_names()),
      shape_hash_(shape.shape_hash()) {}

uint64_t CoincidenceTable::count(int detector, uint32_t bits) const {
    const size_t patterns = size_t{1} << probe_names_.size();
    return counts_[detector * patterns + bits];
}

uint64_t CoincidenceTable::count(const std::string& detector, uint32_t bits) const {
    for (size_t d = 0; d < detector_labels_.size(); ++d)
        if (detector_labels_[d] == detector) return count(static_cast<int>(d), bits);
    throw Error(ErrorCode::unknown_channel, "unknown detector '" + detector + "'");
}

void CoincidenceTable::add(int detector, uint32_t bits, uint64_t n) {
    const size_t patterns = size_t{1} << probe_names_.size();
    counts_.at(detector * patterns + bits) += n;
    total_ += n;
}

void CoincidenceTable::merge(const CoincidenceTable& other) {
    if (shape_hash_ != other.shape_hash_ || counts_.size() != other.counts_.size())
        throw Error(ErrorCode::mixed_configurations,
                    "cannot merge tables from different configurations");
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    total_ += other.total_;
}

std::string CoincidenceTable::bits_string(uint32_t bits) const {
    std::string s;
    for (size_t k = 0; k < probe_names_.size(); ++k) {
        if (k) s += ';';
        s += probe_names_[k] + "=" + ((bits >> k) & 1u ? "1" : "0");
    }
    return s;
}

std::string CoincidenceTable::to_csv() const {
    std::string csv = "detector,bits,count,frequency\n";
    if (total_ == 0) return csv;
    const size_t patterns = size_t{1} << probe_names_.size();
    for (size_t d = 0; d < detector_labels_.size(); ++d) {
        for (size_t bits = 0; bits < patterns; ++bits) {
            const uint64_t c = counts_[d * patterns + bits];
            csv += detector_labels_[d] + "," + bits_string(static_cast<uint32_t>(bits)) + "," +
                   std::to_string(c) + "," + fmt17(static_cast<double>(c) / static_cast<double>(total_)) +
                   "\n";
        }
    }
    return csv;
}

CoincidenceTable aggregate_coincidences(const std::vector<RunRecord>& records,
                                        const OutcomeDistribution& shape) {
    CoincidenceTable table(shape);
    for (const RunRecord& rec : records) {
        if (rec.config_tag != shape.shape_hash())
            throw Error(ErrorCode::mixed_configurations,
                        "run record " + std::to_string(rec.run) + " stems from a different configuration");
        table.add(rec.detector, rec.bits);
    }
    return table;
}

CoincidenceTable sample_table(const OutcomeDistribution& dist, uint64_t n, uint64_t seed,
                              unsigned workers) {
    const CellSampler sampler(dist);
    const CounterRng rng(seed);
    workers = std::max(1u, workers);

    auto count_range = [&](uint64_t begin, uint64_t end, std::vector<uint64_t>& counts) {
        for (uint64_t k = begin; k < end; ++k) counts[sampler.pick(rng.uniform(k))] += 1;
    };

    std::vector<std::vector<uint64_t>> partial(workers,
                                               std::vector<uint64_t>(dist.outcomes().size(), 0));
    if (workers == 1) {
        count_range(0, n, partial[0]);
    } else {
        std::vector<std::thread> threads;
        const uint64_t chunk = (n + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            const uint64_t begin = std::min<uint64_t>(n, w * chunk);
            const uint64_t end = std::min<uint64_t>(n, begin + chunk);
            threads.emplace_back(count_range, begin, end, std::ref(partial[w]));
        }
        for (std::thread& t : threads) t.join();
    }

    CoincidenceTable table(dist);
    const size_t patterns = size_t{1} << dist.probe_names().size();
    for (unsigned w = 0; w < workers; ++w)
        for (size_t i = 0; i < partial[w].size(); ++i)
            if (partial[w][i])
                table.add(static_cast<int>(i / patterns), static_cast<uint32_t>(i % patterns),
                          partial[w][i]);
    return table;
}

}  // namespace mzi
