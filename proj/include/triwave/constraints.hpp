#pragma once

#include "triwave/analysis.hpp"
#include "triwave/probes.hpp"
#include "triwave/sensitivity.hpp"

namespace triwave {

enum class ConstraintKind {
    coupling_abs_le,
    coupling_abs_ge,
    freq_band,
    freq_gap_ge,
    resonance_detune_le,
    eigvec_ratio_le,
    min_width,
    min_gap,
    objective_squared_norm
};

inline const char* to_string(ConstraintKind kind) {
    switch (kind) {
    case ConstraintKind::coupling_abs_le: return "couplingAbsLE";
    case ConstraintKind::coupling_abs_ge: return "couplingAbsGE";
    case ConstraintKind::freq_band: return "freqBand";
    case ConstraintKind::freq_gap_ge: return "freqGapGE";
    case ConstraintKind::resonance_detune_le: return "resonanceDetuneLE";
    case ConstraintKind::eigvec_ratio_le: return "eigvecRatioLE";
    case ConstraintKind::min_width: return "minWidth";
    case ConstraintKind::min_gap: return "minGap";
    case ConstraintKind::objective_squared_norm: return "objectiveSquaredNorm";
    }
    return "?";
}

// One constraint of the optimization problem, normalized so that g <= 0 is
// feasible and |g| is O(1) near its bound.
struct ConstraintSpec {
    ConstraintKind kind{};
    std::string name;

    std::vector<std::string> modes; // labels: coupling triple, band mode, gap pair
    bool bar = false;               // coupling aggregate flavor: alpha-bar vs alpha~
    double factor = 1.0;            // coupling target as a multiple of the initial value
    double tol = 0.01;              // freqBand relative half width
    double bound = 0.0;             // Hz (gap/detune) or meters (width/gap)
    double ratio_factor = 1.1;      // eigvecRatioLE multiplier on the initial ratio
    double scale = 1.0;             // extra normalization divisor
};

// Reference values captured once from the initial design.
struct Baselines {
    std::map<std::string, double> frequency; // per label
    std::map<std::string, double> coupling;  // per coupling-constraint name, |aggregate|_0
    std::map<std::string, double> ratio;     // per ratio-constraint name
};

struct ConstraintRow {
    std::string id;
    double value = 0;
};

struct ConstraintEvaluation {
    std::vector<ConstraintRow> rows;
    Eigen::MatrixXd gradients; // rows x n_p, filled when requested
    CouplingTensor tensor;
    std::map<std::string, double> aggregates; // per coupling constraint, signed value
    double max_violation = 0;

    Eigen::VectorXd values() const {
        Eigen::VectorXd v(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) v(i) = rows[i].value;
        return v;
    }
};

// Evaluates the constraint set on successive designs. Probe sites, probe
// directions and all baselines are frozen at the initial design, so the row
// layout is identical across iterations.
class ConstraintEvaluator {
public:
    ConstraintEvaluator(std::vector<ConstraintSpec> specs, const DesignAnalysis& initial,
                        const Material& material, const MorphOperator& morph,
                        const std::set<std::string>& movable_regions,
                        const std::string& electrode_tag = "electrode",
                        double ratio_floor = 1e-3)
        : specs_(std::move(specs)), material_(material), morph_(morph) {
        double min_width = 0, min_gap = 0;
        bool want_probes = false, want_electrode = false;
        for (const auto& s : specs_) {
            if (s.kind == ConstraintKind::min_width) {
                min_width = std::max(min_width, s.bound);
                want_probes = true;
            }
            if (s.kind == ConstraintKind::min_gap) {
                min_gap = std::max(min_gap, s.bound);
                want_probes = true;
            }
            if (s.kind == ConstraintKind::eigvec_ratio_le) want_electrode = true;
        }
        if (want_probes) {
            probes_ = build_probes(initial.mesh, movable_regions,
                                   min_width > 0 ? min_width : min_gap, min_gap);
            auto initial_hits = measure_probes(initial.mesh, probes_, nullptr);
            for (const auto& h : initial_hits) active_probes_.push_back(h.probe);
        }
        if (want_electrode) mask_ = electrode_mask(initial.mesh, initial.sys.dofs, electrode_tag);

        // morph columns indexed by node for probe gradients
        param_of_node_.resize(initial.mesh.nodes_per_plane);
        for (int j = 0; j < morph_.parameter_count(); ++j)
            for (const auto& t : morph_.column(j)) param_of_node_[t.node2d].push_back({j, t.displacement});

        // baselines
        for (const auto& s : specs_) {
            switch (s.kind) {
            case ConstraintKind::freq_band:
                baselines_.frequency[s.modes[0]] = initial.frequency(s.modes[0]);
                break;
            case ConstraintKind::coupling_abs_le:
            case ConstraintKind::coupling_abs_ge: {
                auto eval = aggregate_value(initial, s);
                require(std::abs(eval) > 0, "constraint ", s.name,
                        ": initial coupling aggregate is exactly zero, cannot normalize");
                baselines_.coupling[s.name] = std::abs(eval);
                break;
            }
            case ConstraintKind::eigvec_ratio_le: {
                auto parts = eigvec_ratio_partials(initial.basis, initial.mode(s.modes[0]), mask_);
                baselines_.ratio[s.name] = std::max(parts.value, ratio_floor);
                break;
            }
            default: break;
            }
        }
    }

    const Baselines& baselines() const { return baselines_; }
    const std::vector<ConstraintSpec>& specs() const { return specs_; }
    const ProbeSet& probes() const { return probes_; }

    std::vector<Triple> required_triples(const DesignAnalysis& a) const {
        std::vector<Triple> triples;
        for (const auto& s : specs_) {
            if (s.kind != ConstraintKind::coupling_abs_le && s.kind != ConstraintKind::coupling_abs_ge)
                continue;
            int n = a.mode(s.modes[0]), m = a.mode(s.modes[1]), l = a.mode(s.modes[2]);
            if (s.bar)
                add_bar_triples(triples, n, m, l);
            else
                add_tilde_triples(triples, n, m, l);
        }
        return triples;
    }

    ConstraintEvaluation evaluate(const DesignAnalysis& a, bool with_gradients,
                                  AdjointEngine* engine, const ShapeSensitivity* shape) const {
        ConstraintEvaluation ev;
        ev.tensor = compute_coupling(a.mesh, material_, a.cache, a.sys.dofs, a.basis,
                                     required_triples(a));

        std::vector<ProbeMeasurement> hits;
        if (!probes_.probes.empty()) hits = measure_probes(a.mesh, probes_, nullptr);
        std::map<int, ProbeHit> hit_of;
        for (const auto& h : hits) hit_of[h.probe] = h.hit;

        // adjoint-route scalars gathered per row index
        struct AdjointRow {
            std::size_t row;
            ScalarPartials partials;
        };
        std::vector<AdjointRow> adjoint_rows;
        struct FreqRow {
            std::size_t row;
            std::vector<std::pair<int, double>> modes; // (mode, dg/df)
        };
        std::vector<FreqRow> freq_rows;
        struct ProbeRow {
            std::size_t row;
            int probe;
            double dg_ddist;
        };
        std::vector<ProbeRow> probe_rows;

        for (const auto& s : specs_) {
            switch (s.kind) {
            case ConstraintKind::coupling_abs_le:
            case ConstraintKind::coupling_abs_ge: {
                double signed_value = aggregate_from_tensor(a, ev.tensor, s);
                ev.aggregates[s.name] = signed_value;
                double denom = s.factor * baselines_.coupling.at(s.name) * s.scale;
                bool le = s.kind == ConstraintKind::coupling_abs_le;
                double g = le ? std::abs(signed_value) / denom - 1.0 / s.scale
                              : 1.0 / s.scale - std::abs(signed_value) / denom;
                ev.rows.push_back({s.name, g});
                if (with_gradients) {
                    double sign = signed_value > 0 ? 1.0 : (signed_value < 0 ? -1.0 : 0.0);
                    double chain = (le ? 1.0 : -1.0) * sign / denom;
                    adjoint_rows.push_back({ev.rows.size() - 1,
                                            aggregate_partials(a, s, chain)});
                }
                break;
            }
            case ConstraintKind::freq_band: {
                double f = a.frequency(s.modes[0]);
                double f0 = baselines_.frequency.at(s.modes[0]);
                double upper = f / f0 - (1.0 + s.tol);
                double lower = (1.0 - s.tol) - f / f0;
                double g = std::max(upper, lower) / (s.tol * s.scale);
                ev.rows.push_back({s.name, g});
                if (with_gradients) {
                    double df = (upper >= lower ? 1.0 : -1.0) / (f0 * s.tol * s.scale);
                    freq_rows.push_back({ev.rows.size() - 1, {{a.mode(s.modes[0]), df}}});
                }
                break;
            }
            case ConstraintKind::freq_gap_ge: {
                double fa = a.frequency(s.modes[0]);
                double fb = a.frequency(s.modes[1]);
                double g = (1.0 - std::abs(fa - fb) / s.bound) / s.scale;
                ev.rows.push_back({s.name, g});
                if (with_gradients) {
                    double sign = fa - fb > 0 ? 1.0 : -1.0;
                    double c = -sign / (s.bound * s.scale);
                    freq_rows.push_back(
                        {ev.rows.size() - 1, {{a.mode(s.modes[0]), c}, {a.mode(s.modes[1]), -c}}});
                }
                break;
            }
            case ConstraintKind::resonance_detune_le: {
                double fa = a.frequency(s.modes[0]);
                double fb = a.frequency(s.modes[1]);
                double g = (std::abs(2.0 * fa - fb) / s.bound - 1.0) / s.scale;
                ev.rows.push_back({s.name, g});
                if (with_gradients) {
                    double sign = 2.0 * fa - fb > 0 ? 1.0 : -1.0;
                    double c = sign / (s.bound * s.scale);
                    freq_rows.push_back({ev.rows.size() - 1,
                                         {{a.mode(s.modes[0]), 2.0 * c}, {a.mode(s.modes[1]), -c}}});
                }
                break;
            }
            case ConstraintKind::eigvec_ratio_le: {
                auto parts = eigvec_ratio_partials(a.basis, a.mode(s.modes[0]), mask_);
                double denom = s.ratio_factor * baselines_.ratio.at(s.name) * s.scale;
                ev.rows.push_back({s.name, parts.value / denom - 1.0 / s.scale});
                if (with_gradients) {
                    ScalarPartials scaled = parts;
                    scaled.dphi[0] /= denom;
                    adjoint_rows.push_back({ev.rows.size() - 1, std::move(scaled)});
                }
                break;
            }
            case ConstraintKind::min_width:
            case ConstraintKind::min_gap: {
                bool width = s.kind == ConstraintKind::min_width;
                for (int pk : active_probes_) {
                    if (probes_.probes[pk].is_width != width) continue;
                    auto it = hit_of.find(pk);
                    std::string id = s.name + "[" + std::to_string(pk) + "]";
                    if (it == hit_of.end()) {
                        // far from anything: trivially feasible
                        ev.rows.push_back({id, -(probes_.gap_horizon / s.bound - 1.0) / s.scale});
                        if (with_gradients) probe_rows.push_back({ev.rows.size() - 1, -1, 0.0});
                        continue;
                    }
                    double g = (1.0 - it->second.distance / s.bound) / s.scale;
                    ev.rows.push_back({id, g});
                    if (with_gradients)
                        probe_rows.push_back({ev.rows.size() - 1, pk, -1.0 / (s.bound * s.scale)});
                }
                break;
            }
            case ConstraintKind::objective_squared_norm:
                break; // handled by the optimizer, not a g-row
            }
        }

        for (const auto& row : ev.rows) ev.max_violation = std::max(ev.max_violation, row.value);

        if (with_gradients) {
            require(engine && shape, "constraint gradients need adjoint and shape engines");
            ev.gradients = Eigen::MatrixXd::Zero(static_cast<int>(ev.rows.size()),
                                                 morph_.parameter_count());

            std::vector<ScalarPartials> scalars;
            scalars.reserve(adjoint_rows.size());
            for (auto& ar : adjoint_rows) scalars.push_back(std::move(ar.partials));
            if (!scalars.empty()) {
                Eigen::MatrixXd rows = engine->gradients(scalars);
                for (std::size_t k = 0; k < adjoint_rows.size(); ++k)
                    ev.gradients.row(static_cast<int>(adjoint_rows[k].row)) = rows.row(static_cast<int>(k));
            }

            if (!freq_rows.empty()) {
                for (int j = 0; j < morph_.parameter_count(); ++j) {
                    auto ps = shape->matrix_sensitivity(j);
                    for (const auto& fr : freq_rows) {
                        double g = 0;
                        for (auto [mode, coeff] : fr.modes)
                            g += coeff * frequency_sensitivity(a.mesh, a.sys.dofs, a.basis, mode, ps);
                        ev.gradients(static_cast<int>(fr.row), j) += g;
                    }
                }
            }

            for (const auto& pr : probe_rows) {
                if (pr.probe < 0) continue;
                const Probe& probe = probes_.probes[pr.probe];
                const ProbeHit& hit = hit_of.at(pr.probe);
                for (int node : {probe.node2d, hit.seg_a, hit.seg_b}) {
                    for (const auto& [j, vel] : param_of_node_[node]) {
                        Vec2 vo = node == probe.node2d ? vel : Vec2(Vec2::Zero());
                        Vec2 va = node == hit.seg_a ? vel : Vec2(Vec2::Zero());
                        Vec2 vb = node == hit.seg_b ? vel : Vec2(Vec2::Zero());
                        double dd = probe_distance_sensitivity(a.mesh, probe, hit, vo, va, vb);
                        ev.gradients(static_cast<int>(pr.row), j) += pr.dg_ddist * dd;
                    }
                }
            }
        }
        return ev;
    }

    // |aggregate| partial bundle scaled by `chain` (d g / d aggregate).
    ScalarPartials aggregate_partials(const DesignAnalysis& a, const ConstraintSpec& s,
                                      double chain) const {
        int n = a.mode(s.modes[0]), m = a.mode(s.modes[1]), l = a.mode(s.modes[2]);
        std::vector<Triple> triples;
        if (s.bar)
            add_bar_triples(triples, n, m, l);
        else
            add_tilde_triples(triples, n, m, l);

        ScalarPartials out;
        for (int mode : {n, m, l})
            if (std::find(out.modes.begin(), out.modes.end(), mode) == out.modes.end())
                out.modes.push_back(mode);
        out.dfreq.assign(out.modes.size(), 0.0);
        out.dphi.assign(out.modes.size(), Eigen::VectorXd::Zero(a.sys.dofs.free_count));

        auto parts = std::make_shared<std::vector<ScalarPartials>>();
        for (const auto& t : triples) {
            parts->push_back(
                alpha_partials(a.mesh, material_, a.cache, a.sys.dofs, a.basis, t[0], t[1], t[2]));
            out.value += parts->back().value;
        }
        for (const auto& part : *parts)
            for (std::size_t slot = 0; slot < part.modes.size(); ++slot) {
                auto pos = std::find(out.modes.begin(), out.modes.end(), part.modes[slot]) -
                           out.modes.begin();
                out.dphi[pos] += chain * part.dphi[slot];
            }
        out.dp_explicit = [parts, chain](const ParameterSensitivity& ps) {
            double acc = 0;
            for (const auto& part : *parts) acc += chain * part.dp_explicit(ps);
            return acc;
        };
        return out;
    }

private:
    double aggregate_value(const DesignAnalysis& a, const ConstraintSpec& s) const {
        auto tensor = compute_coupling(a.mesh, material_, a.cache, a.sys.dofs, a.basis,
                                       required_triples(a));
        return aggregate_from_tensor(a, tensor, s);
    }

    double aggregate_from_tensor(const DesignAnalysis& a, const CouplingTensor& tensor,
                                 const ConstraintSpec& s) const {
        int n = a.mode(s.modes[0]), m = a.mode(s.modes[1]), l = a.mode(s.modes[2]);
        return s.bar ? alpha_bar(tensor, n, m, l) : alpha_tilde(tensor, n, m, l);
    }

    std::vector<ConstraintSpec> specs_;
    const Material& material_;
    const MorphOperator& morph_;
    ProbeSet probes_;
    std::vector<int> active_probes_; // probes that hit something at the initial design
    ElectrodeMask mask_;
    Baselines baselines_;
    std::vector<std::vector<std::pair<int, Vec2>>> param_of_node_;
};

// Objective p.p with an O(1) normalization derived from the box span.
struct Objective {
    double scale = 1.0;

    static Objective squared_norm(const DesignVector& dv) {
        Objective obj;
        double mean_span = 0;
        for (int j = 0; j < dv.size(); ++j) mean_span += 0.5 * (dv.box_upper(j) - dv.box_lower(j));
        mean_span /= std::max(dv.size(), 1);
        obj.scale = mean_span * mean_span * std::max(dv.size(), 1);
        return obj;
    }

    double value(const Eigen::VectorXd& p) const { return p.squaredNorm() / scale; }
    Eigen::VectorXd gradient(const Eigen::VectorXd& p) const { return 2.0 * p / scale; }
};

} // namespace triwave
