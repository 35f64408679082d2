#include "mzi/histories.hpp"

#include <algorithm>
#include <set>

namespace mzi {

namespace {

std::set<std::string> channel_set(const ProjectorExpr& e) {
    return {e.channels.begin(), e.channels.end()};
}

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t");
    size_t e = s.find_last_not_of(" \t");
    return b == std::string_view::npos ? std::string() : std::string(s.substr(b, e - b + 1));
}

/// First identity stage, by convention where probes couple.
int canonical_probe_slot(const InterferometerSpec& spec) {
    for (int t = 1; t < spec.slot_count(); ++t)
        if (spec.stage_nodes(t).empty()) return t;
    return -1;
}

void zero_outside(const std::vector<std::string>& channels, int n_probes,
                  const InterferometerSpec& spec, Eigen::VectorXcd& amps) {
    std::vector<char> keep(spec.channel_count(), 0);
    for (const std::string& ch : channels) keep[spec.channel_index(ch)] = 1;
    const uint32_t patterns = 1u << n_probes;
    for (int c = 0; c < spec.channel_count(); ++c) {
        if (keep[c]) continue;
        const Eigen::Index base = static_cast<Eigen::Index>(c) << n_probes;
        amps.segment(base, patterns).setZero();
    }
}

}  // namespace

std::string ProjectorExpr::label() const {
    if (channels.empty()) return "0";
    std::string s = channels.front();
    for (size_t i = 1; i < channels.size(); ++i) s += "+" + channels[i];
    return s;
}

bool ProjectorExpr::same_channels(const ProjectorExpr& other) const {
    return channel_set(*this) == channel_set(other);
}

Eigen::MatrixXcd projector_of(const ProjectorExpr& expr, const InterferometerSpec& spec) {
    if (expr.channels.empty() && !expr.complement)
        throw Error(ErrorCode::unknown_channel, "projector expression has no channels");
    Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(spec.channel_count(), spec.channel_count());
    for (const std::string& ch : expr.channels) {
        const int c = spec.channel_index(ch);  // throws UnknownChannel
        if (!spec.is_occupied(ch, expr.slot))
            throw Error(ErrorCode::channel_not_occupied,
                        "channel '" + ch + "' is not occupied at slot " + std::to_string(expr.slot));
        p(c, c) = 1.0;
    }
    return p;
}

ProjectorExpr complement_of(const std::vector<ProjectorExpr>& exprs, int slot,
                            const InterferometerSpec& spec) {
    std::set<std::string> taken;
    for (const ProjectorExpr& e : exprs)
        for (const std::string& ch : e.channels) taken.insert(ch);
    ProjectorExpr rest{slot, {}, true};
    for (const std::string& ch : spec.occupied_channels(slot))
        if (!taken.count(ch)) rest.channels.push_back(ch);
    return rest;
}

// ---------------------------------------------------------------------------
// Framework

Framework::Framework(std::vector<Decomposition> decomps, const InterferometerSpec& spec)
    : decomps_(std::move(decomps)) {
    std::sort(decomps_.begin(), decomps_.end(),
              [](const Decomposition& a, const Decomposition& b) { return a.slot < b.slot; });
    std::set<int> slots;
    for (Decomposition& d : decomps_) {
        if (!slots.insert(d.slot).second)
            throw Error(ErrorCode::syntax_error,
                        "two decompositions at slot " + std::to_string(d.slot));
        std::set<std::string> seen;
        for (ProjectorExpr& e : d.exprs) {
            e.slot = d.slot;
            if (e.channels.empty())
                throw Error(ErrorCode::syntax_error, "empty projector in decomposition");
            for (const std::string& ch : e.channels) {
                if (!spec.is_occupied(ch, d.slot))
                    throw Error(ErrorCode::channel_not_occupied,
                                "channel '" + ch + "' is not occupied at slot " +
                                    std::to_string(d.slot));
                if (!seen.insert(ch).second)
                    throw Error(ErrorCode::syntax_error,
                                "channel '" + ch + "' appears in two projectors at slot " +
                                    std::to_string(d.slot));
            }
        }
        ProjectorExpr rest = complement_of(d.exprs, d.slot, spec);
        if (!rest.channels.empty()) d.exprs.push_back(std::move(rest));
    }
}

Framework Framework::parse(std::string_view text, const InterferometerSpec& spec) {
    std::vector<Decomposition> decomps;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t semi = text.find(';', pos);
        std::string seg = trim(text.substr(pos, (semi == std::string_view::npos ? text.size() : semi) - pos));
        pos = (semi == std::string_view::npos) ? text.size() + 1 : semi + 1;
        if (seg.empty() || seg == "detector") continue;

        size_t colon = seg.find(':');
        if (colon == std::string::npos)
            throw Error(ErrorCode::syntax_error, "framework segment '" + seg + "' lacks 'slot:{...}'");
        std::string slot_name = trim(seg.substr(0, colon));
        std::string body = trim(seg.substr(colon + 1));

        Decomposition d;
        if (slot_name == "probe") {
            d.slot = canonical_probe_slot(spec);
            if (d.slot < 0)
                throw Error(ErrorCode::syntax_error, "this layout has no canonical probe slot");
        } else if (slot_name.rfind("slot", 0) == 0) {
            try {
                d.slot = std::stoi(slot_name.substr(4));
            } catch (const std::exception&) {
                throw Error(ErrorCode::syntax_error, "bad slot name '" + slot_name + "'");
            }
        } else {
            throw Error(ErrorCode::syntax_error, "bad slot name '" + slot_name + "'");
        }
        if (d.slot < 0 || d.slot >= spec.slot_count())
            throw Error(ErrorCode::syntax_error, "slot " + std::to_string(d.slot) + " out of range");

        if (body.size() < 2 || body.front() != '{' || body.back() != '}')
            throw Error(ErrorCode::syntax_error, "expected '{...}' in segment '" + seg + "'");
        body = body.substr(1, body.size() - 2);

        size_t p = 0;
        while (p <= body.size()) {
            size_t comma = body.find(',', p);
            std::string item = trim(body.substr(p, (comma == std::string::npos ? body.size() : comma) - p));
            p = (comma == std::string::npos) ? body.size() + 1 : comma + 1;
            if (item.empty()) continue;
            ProjectorExpr e{d.slot, {}, false};
            size_t q = 0;
            while (q <= item.size()) {
                size_t plus = item.find('+', q);
                std::string ch = trim(item.substr(q, (plus == std::string::npos ? item.size() : plus) - q));
                q = (plus == std::string::npos) ? item.size() + 1 : plus + 1;
                if (ch.empty())
                    throw Error(ErrorCode::syntax_error, "bad channel expression '" + item + "'");
                e.channels.push_back(ch);
            }
            d.exprs.push_back(std::move(e));
        }
        if (d.exprs.empty())
            throw Error(ErrorCode::syntax_error, "empty decomposition in segment '" + seg + "'");
        decomps.push_back(std::move(d));
    }
    return Framework(std::move(decomps), spec);
}

std::string Framework::to_string() const {
    if (decomps_.empty()) return "trivial";
    std::string out;
    for (const Decomposition& d : decomps_) {
        if (!out.empty()) out += "; ";
        out += "slot" + std::to_string(d.slot) + ":{";
        for (size_t i = 0; i < d.exprs.size(); ++i) out += (i ? "," : "") + d.exprs[i].label();
        out += "}";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chain kets and the decoherence functional

Eigen::VectorXcd chain_ket(const History& history, const Simulation& sim) {
    for (size_t i = 0; i < history.steps.size(); ++i) {
        if (i > 0 && history.steps[i].slot <= history.steps[i - 1].slot)
            throw Error(ErrorCode::syntax_error, "history projectors must have increasing slots");
        projector_of(history.steps[i], sim.spec());  // validates
    }
    const std::string& det_channel = sim.spec().detector_channel(history.detector);

    JointState state = sim.initial_state();
    size_t next = 0;
    auto project_at = [&](int slot) {
        while (next < history.steps.size() && history.steps[next].slot == slot) {
            zero_outside(history.steps[next].channels, sim.space().n_probes, sim.spec(),
                         state.amplitudes);
            ++next;
        }
    };
    project_at(0);
    for (int slot = 1; slot <= sim.spec().final_slot(); ++slot) {
        sim.step(state);
        project_at(slot);
    }
    zero_outside({det_channel}, sim.space().n_probes, sim.spec(), state.amplitudes);
    return state.amplitudes;
}

DecoherenceMatrix decoherence_matrix(const Framework& framework, const Simulation& sim) {
    const auto& decomps = framework.decompositions();
    const auto& detectors = sim.spec().detectors();

    std::vector<Eigen::VectorXcd> chains;
    DecoherenceMatrix dm;

    std::vector<size_t> odometer(decomps.size(), 0);
    bool done = false;
    while (!done) {
        std::string outcome_label;
        History base;
        for (size_t k = 0; k < decomps.size(); ++k) {
            const ProjectorExpr& e = decomps[k].exprs[odometer[k]];
            base.steps.push_back(e);
            outcome_label += (k ? "&" : "") + e.label();
        }
        for (const std::string& det : detectors) {
            History h = base;
            h.detector = det;
            chains.push_back(chain_ket(h, sim));
            dm.labels_.push_back("(" + (outcome_label.empty() ? det : outcome_label + "," + det) + ")");
            dm.outcome_labels_.push_back(outcome_label);
            dm.detector_of_.push_back(det);
        }
        done = true;
        for (size_t k = decomps.size(); k-- > 0;) {
            if (++odometer[k] < decomps[k].exprs.size()) {
                done = false;
                break;
            }
            odometer[k] = 0;
        }
        if (decomps.empty()) break;
    }

    const size_t n = chains.size();
    dm.matrix_.resize(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) dm.matrix_(i, j) = chains[j].dot(chains[i]);
    return dm;
}

ConsistencyReport check_consistency(const DecoherenceMatrix& dm, double tol) {
    if (tol <= 0.0)
        throw Error(ErrorCode::syntax_error, "consistency tolerance must be positive");
    ConsistencyReport report;
    const Eigen::MatrixXcd& m = dm.matrix();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        report.max_diagonal = std::max(report.max_diagonal, m(i, i).real());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
            const double mag = std::abs(m(i, j));
            if (mag > report.max_offdiag) {
                report.max_offdiag = mag;
                report.witness = {dm.labels()[i], dm.labels()[j]};
            }
        }
    }
    report.consistent = report.max_offdiag <= tol * report.max_diagonal;
    if (report.consistent) report.witness = {};
    return report;
}

std::map<std::string, double> conditional_distribution(const Framework& framework,
                                                       const Simulation& sim,
                                                       const std::string& detector,
                                                       double tol) {
    const DecoherenceMatrix dm = decoherence_matrix(framework, sim);
    const ConsistencyReport report = check_consistency(dm, tol);
    if (!report.consistent)
        throw Error(ErrorCode::inconsistent_framework,
                    "framework " + framework.to_string() + " is inconsistent (max off-diagonal " +
                        std::to_string(report.max_offdiag) + " at " + report.witness.first + " vs " +
                        report.witness.second + "); probabilities refused");

    sim.spec().detector_channel(detector);  // validates the name
    double denom = 0.0;
    std::map<std::string, double> joint;
    for (size_t i = 0; i < dm.size(); ++i) {
        if (dm.detector_of()[i] != detector) continue;
        double p = dm.matrix()(i, i).real();
        if (p < kProbabilityClamp) p = 0.0;
        joint[dm.outcome_labels()[i]] += p;
        denom += p;
    }
    if (denom <= 0.0)
        throw Error(ErrorCode::zero_probability_condition, "Pr(" + detector + ") = 0");
    for (auto& [k, v] : joint) v /= denom;
    return joint;
}

// ---------------------------------------------------------------------------
// Refinement and the guard

Framework refine_frameworks(const Framework& f1, const Framework& f2, const Simulation& sim,
                            double tol) {
    std::map<int, const Decomposition*> d1, d2;
    for (const Decomposition& d : f1.decompositions()) d1[d.slot] = &d;
    for (const Decomposition& d : f2.decompositions()) d2[d.slot] = &d;

    std::vector<Decomposition> merged;
    std::set<int> slots;
    for (const auto& [slot, d] : d1) slots.insert(slot);
    for (const auto& [slot, d] : d2) slots.insert(slot);

    for (int slot : slots) {
        const Decomposition* a = d1.count(slot) ? d1.at(slot) : nullptr;
        const Decomposition* b = d2.count(slot) ? d2.at(slot) : nullptr;
        if (a == nullptr || b == nullptr) {
            Decomposition copy = *(a != nullptr ? a : b);
            // strip materialized complements; the constructor re-adds them
            std::erase_if(copy.exprs, [](const ProjectorExpr& e) { return e.complement; });
            merged.push_back(std::move(copy));
            continue;
        }
        Decomposition d{slot, {}};
        for (const ProjectorExpr& ea : a->exprs) {
            for (const ProjectorExpr& eb : b->exprs) {
                const Eigen::MatrixXcd pa = projector_of(ea, sim.spec());
                const Eigen::MatrixXcd pb = projector_of(eb, sim.spec());
                if ((pa * pb - pb * pa).cwiseAbs().maxCoeff() > 1e-12)
                    throw Error(ErrorCode::non_commuting_projectors,
                                "projectors " + ea.label() + " and " + eb.label() +
                                    " at slot " + std::to_string(slot) + " do not commute");
                const std::set<std::string> sb = channel_set(eb);
                ProjectorExpr inter{slot, {}, false};
                for (const std::string& ch : ea.channels)
                    if (sb.count(ch)) inter.channels.push_back(ch);
                if (!inter.channels.empty()) d.exprs.push_back(std::move(inter));
            }
        }
        merged.push_back(std::move(d));
    }

    Framework refined(std::move(merged), sim.spec());
    const ConsistencyReport report = check_consistency(decoherence_matrix(refined, sim), tol);
    if (!report.consistent)
        throw IncompatibleFrameworksError(report.max_offdiag, report.witness);
    return refined;
}

namespace {

std::string render_query(const GuardQuery& q) {
    return q.framework_id + ":{" + q.expr.label() + "}@" + std::to_string(q.expr.slot) + " | " +
           q.detector;
}

const Framework& lookup(const std::map<std::string, Framework>& frameworks, const std::string& id) {
    auto it = frameworks.find(id);
    if (it == frameworks.end())
        throw Error(ErrorCode::syntax_error, "no framework registered as '" + id + "'");
    return it->second;
}

// Pr(expr at slot | detector) inside one framework, by coarse-graining the
// framework's conditional table.
GuardAnswer answer_single(const GuardQuery& q, const Framework& fw, const Simulation& sim,
                          double tol) {
    GuardAnswer ans;
    ans.text = render_query(q);
    const Decomposition* d = nullptr;
    for (const Decomposition& dec : fw.decompositions())
        if (dec.slot == q.expr.slot) d = &dec;
    if (d == nullptr) {
        ans.refusal = "framework has no decomposition at slot " + std::to_string(q.expr.slot);
        return ans;
    }
    const ProjectorExpr* match = nullptr;
    for (const ProjectorExpr& e : d->exprs)
        if (e.same_channels(q.expr)) match = &e;
    if (match == nullptr) {
        ans.refusal = "{" + q.expr.label() + "} is not an outcome of framework " + fw.to_string();
        return ans;
    }
    try {
        // conditional_distribution keys by the full outcome tuple; sum the
        // entries whose component at this slot is the matched expression.
        const DecoherenceMatrix dm = decoherence_matrix(fw, sim);
        const ConsistencyReport rep = check_consistency(dm, tol);
        if (!rep.consistent) {
            ans.refusal = "framework " + fw.to_string() + " is inconsistent (max off-diagonal " +
                          std::to_string(rep.max_offdiag) + "); probabilities refused";
            return ans;
        }
        size_t slot_pos = 0;
        for (size_t k = 0; k < fw.decompositions().size(); ++k)
            if (fw.decompositions()[k].slot == q.expr.slot) slot_pos = k;
        double num = 0.0, denom = 0.0;
        for (size_t i = 0; i < dm.size(); ++i) {
            if (dm.detector_of()[i] != q.detector) continue;
            double p = dm.matrix()(i, i).real();
            if (p < kProbabilityClamp) p = 0.0;
            denom += p;
            // outcome label components are '&'-joined in decomposition order
            std::string outcome = dm.outcome_labels()[i];
            std::vector<std::string> parts;
            size_t pos = 0;
            while (true) {
                size_t amp = outcome.find('&', pos);
                parts.push_back(outcome.substr(pos, amp == std::string::npos ? amp : amp - pos));
                if (amp == std::string::npos) break;
                pos = amp + 1;
            }
            if (parts[slot_pos] == match->label()) num += p;
        }
        if (denom <= 0.0) {
            ans.refusal = "Pr(" + q.detector + ") = 0";
            return ans;
        }
        ans.answered = true;
        ans.probability = num / denom;
    } catch (const Error& e) {
        ans.refusal = e.what();
    }
    return ans;
}

}  // namespace

GuardReport inference_guard(const std::map<std::string, Framework>& frameworks,
                            const std::vector<GuardQuery>& queries,
                            const std::vector<std::vector<size_t>>& conjunctions,
                            const Simulation& sim, double tol) {
    GuardReport report;
    for (const GuardQuery& q : queries)
        report.queries.push_back(answer_single(q, lookup(frameworks, q.framework_id), sim, tol));

    for (const std::vector<size_t>& conj : conjunctions) {
        GuardAnswer ans;
        for (size_t idx : conj) {
            if (idx >= queries.size())
                throw Error(ErrorCode::syntax_error, "conjunction references query #" +
                                                         std::to_string(idx) + " which does not exist");
            ans.text += (ans.text.empty() ? "" : " AND ") + render_query(queries[idx]);
        }
        if (conj.empty()) {
            ans.refusal = "empty conjunction";
            report.conjunctions.push_back(std::move(ans));
            continue;
        }

        // Resolve the framework the conjunction may be evaluated in.
        std::vector<std::string> ids;
        for (size_t idx : conj)
            if (std::find(ids.begin(), ids.end(), queries[idx].framework_id) == ids.end())
                ids.push_back(queries[idx].framework_id);
        Framework joint_fw;
        bool have_fw = false;
        try {
            joint_fw = lookup(frameworks, ids.front());
            have_fw = true;
            for (size_t k = 1; k < ids.size(); ++k)
                joint_fw = refine_frameworks(joint_fw, lookup(frameworks, ids[k]), sim, tol);
        } catch (const IncompatibleFrameworksError& e) {
            ans.refusal = "REFUSED by the single framework rule: frameworks ";
            for (size_t k = 0; k < ids.size(); ++k) ans.refusal += (k ? ", " : "") + ids[k];
            ans.refusal += " are incompatible (" + std::string(e.what()) + ")";
            have_fw = false;
        } catch (const Error& e) {
            ans.refusal = e.what();
            have_fw = false;
        }
        if (!have_fw) {
            report.conjunctions.push_back(std::move(ans));
            continue;
        }

        // Consistency of the evaluation framework.
        const ConsistencyReport rep = check_consistency(decoherence_matrix(joint_fw, sim), tol);
        if (!rep.consistent) {
            ans.refusal = "framework " + joint_fw.to_string() + " is inconsistent; probabilities refused";
            report.conjunctions.push_back(std::move(ans));
            continue;
        }

        // Conjunction probability: merge the projectors (same-slot projectors
        // intersect), condition on the common detector.
        std::map<int, std::vector<std::string>> step_channels;
        bool first = true;
        std::string detector;
        bool impossible = false;
        for (size_t idx : conj) {
            const GuardQuery& q = queries[idx];
            if (first) {
                detector = q.detector;
                first = false;
            } else if (q.detector != detector) {
                impossible = true;  // two distinct detector outcomes never co-occur
            }
            auto it = step_channels.find(q.expr.slot);
            if (it == step_channels.end()) {
                step_channels[q.expr.slot] = q.expr.channels;
            } else {
                std::set<std::string> keep(q.expr.channels.begin(), q.expr.channels.end());
                std::vector<std::string> inter;
                for (const std::string& ch : it->second)
                    if (keep.count(ch)) inter.push_back(ch);
                it->second = std::move(inter);
            }
        }
        try {
            double joint_p = 0.0;
            if (!impossible) {
                History h;
                for (const auto& [slot, channels] : step_channels) {
                    if (channels.empty()) {
                        impossible = true;
                        break;
                    }
                    h.steps.push_back({slot, channels, false});
                }
                if (!impossible) {
                    h.detector = detector;
                    joint_p = chain_ket(h, sim).squaredNorm();
                }
            }
            if (joint_p < kProbabilityClamp) joint_p = 0.0;
            const History det_only{{}, detector};
            double p_det = chain_ket(det_only, sim).squaredNorm();
            if (p_det < kProbabilityClamp) p_det = 0.0;
            if (p_det <= 0.0) {
                ans.refusal = "Pr(" + detector + ") = 0";
            } else {
                ans.answered = true;
                ans.probability = impossible ? 0.0 : joint_p / p_det;
            }
        } catch (const Error& e) {
            ans.refusal = e.what();
        }
        report.conjunctions.push_back(std::move(ans));
    }
    return report;
}

}  // namespace mzi
