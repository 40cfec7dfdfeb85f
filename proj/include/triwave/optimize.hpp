#pragma once

#include "triwave/config.hpp"
#include "triwave/mesh_io.hpp"
#include "triwave/optimize_setup.hpp"

namespace triwave {

class MeshUpdateError : public Error {
public:
    using Error::Error;
};

struct IterationRecord {
    int iteration = 0;
    double objective = 0;
    std::vector<double> constraint_values;       // all rows, layout of row_ids
    std::map<std::string, double> frequencies;   // per tracked label
    std::map<std::string, double> couplings;     // |aggregate| per coupling constraint
    double max_violation = 0;
    double step_norm = 0;
};

struct OptimizationResult {
    bool feasible = false;
    int iterations = 0;
    Eigen::VectorXd final_p;
    ExtrudedMesh final_mesh;
    std::vector<std::string> row_ids;
    std::vector<IterationRecord> history;
};

struct OptimizationCallbacks {
    // called after each design analysis with the current record
    std::function<void(const IterationRecord&)> on_record;
    // called whenever a new design vector is accepted
    std::function<void(int iteration, const Eigen::VectorXd& p, const MmaSolver::State&)>
        on_checkpoint;
};

struct ResumeState {
    int iteration = 0;
    Eigen::VectorXd p;
    MmaSolver::State mma;
};

namespace detail {

inline IterationRecord make_record(int iter, const OptimizationSetup& setup,
                                   const DesignAnalysis& analysis,
                                   const ConstraintEvaluation& ev, const Objective& objective,
                                   const Eigen::VectorXd& p, double step_norm) {
    IterationRecord rec;
    rec.iteration = iter;
    rec.objective = objective.value(p);
    for (const auto& row : ev.rows) rec.constraint_values.push_back(row.value);
    for (const auto& label : setup.config.labels)
        rec.frequencies[label.name] = analysis.frequency(label.name);
    for (const auto& [name, value] : ev.aggregates) rec.couplings[name] = std::abs(value);
    rec.max_violation = ev.max_violation;
    rec.step_norm = step_norm;
    return rec;
}

} // namespace detail

// Outer optimization loop: modal analysis -> tracking -> constraint and
// objective evaluation -> gradients -> MMA update -> morph, repeated until
// every constraint row is within the feasibility tolerance and the step
// stalls (or the iteration budget runs out). Inverted-element proposals are
// retried with halved move limits up to three times.
inline OptimizationResult run_optimization(OptimizationSetup& setup,
                                           const OptimizationCallbacks& callbacks = {},
                                           const ResumeState* resume = nullptr) {
    const ProblemConfig& cfg = setup.config;
    int np = setup.morph.parameter_count();

    Eigen::VectorXd p = Eigen::VectorXd::Zero(np);
    MmaSolver mma(np, 0, setup.design.box_lower, setup.design.box_upper, cfg.mma);
    int start_iter = 0;

    if (resume) {
        p = resume->p;
        require(p.size() == np, "resume: design vector size mismatch");
        start_iter = resume->iteration;
        if (resume->mma.iteration > 0) mma.restore(resume->mma);
    }

    Objective objective = Objective::squared_norm(setup.design);

    OptimizationResult result;
    DesignAnalysis prev_analysis;
    bool have_prev = false;

    Eigen::VectorXd p_prev = p;
    double last_step_norm = 0;

    for (int iter = start_iter;; ++iter) {
        // analysis of the current design
        DesignAnalysis analysis;
        analysis.mesh = apply_design(setup.initial_analysis.mesh, setup.morph, p);
        analysis.cache.build(analysis.mesh);
        analysis.sys = assemble_system(analysis.mesh, cfg.material, analysis.cache);
        analysis.basis = solve_modes(analysis.sys, cfg.solve_count());
        analysis.basis.mesh_hash = analysis.mesh.content_hash();

        if (iter == 0 && !resume) {
            analysis.mode_of_label = setup.initial_analysis.mode_of_label;
        } else {
            const DesignAnalysis& reference = have_prev ? prev_analysis : setup.initial_analysis;
            std::vector<TrackedLabel> labels;
            for (const auto& l : cfg.labels)
                labels.push_back({l.name, setup.initial_analysis.mode_of_label.at(l.name),
                                  reference.mode_of_label.at(l.name)});
            auto tracked =
                track_modes(analysis.basis, reference.basis, setup.initial_analysis.basis, labels,
                            cfg.tracking);
            for (const auto& t : tracked) analysis.mode_of_label[t.name] = t.index;
        }

        ShapeSensitivity shape(analysis.mesh, cfg.material, analysis.cache, setup.morph);
        AdjointEngine engine(analysis.mesh, analysis.sys, analysis.basis, shape);
        auto ev = setup.evaluator->evaluate(analysis, true, &engine, &shape);

        if (result.row_ids.empty())
            for (const auto& row : ev.rows) result.row_ids.push_back(row.id);

        auto record = detail::make_record(iter, setup, analysis, ev, objective, p, last_step_norm);
        result.history.push_back(record);
        if (callbacks.on_record) callbacks.on_record(record);

        bool feasible = ev.max_violation <= cfg.feasibility_tol;
        bool stalled = iter > start_iter && last_step_norm < cfg.step_tol;
        if ((feasible && stalled) || iter >= cfg.max_iterations) {
            result.feasible = feasible;
            result.iterations = iter;
            result.final_p = p;
            result.final_mesh = analysis.mesh;
            return result;
        }

        // MMA step with mesh-validity backtracking
        mma.advance(p);
        Eigen::VectorXd p_next;
        double move = cfg.mma.move_limit;
        for (int attempt = 0;; ++attempt) {
            p_next = mma.propose(p, objective.gradient(p), ev.values(), ev.gradients, move);
            try {
                apply_design(setup.initial_analysis.mesh, setup.morph, p_next);
                break;
            } catch (const Error& e) {
                if (attempt >= 3)
                    throw MeshUpdateError("optimization stopped: mesh update kept inverting "
                                          "elements after 3 move-limit backtracks (" +
                                          std::string(e.what()) + ")");
                move *= 0.5;
            }
        }

        p_prev = p;
        p = p_next;
        last_step_norm = (p - p_prev).norm();
        prev_analysis = std::move(analysis);
        have_prev = true;
        if (callbacks.on_checkpoint) callbacks.on_checkpoint(iter + 1, p, mma.state());
    }
}

// From-scratch re-verification of a final design: fresh caches, assembly,
// eigensolve and tensor; returns the largest relative deviation between the
// recomputed constraint rows and the reported ones.
inline double verify_final_design(OptimizationSetup& setup, const Eigen::VectorXd& p,
                                  const std::vector<double>& reported_rows) {
    DesignAnalysis analysis;
    analysis.mesh = apply_design(setup.initial_analysis.mesh, setup.morph, p);
    analysis.cache.build(analysis.mesh);
    analysis.sys = assemble_system(analysis.mesh, setup.config.material, analysis.cache);
    analysis.basis = solve_modes(analysis.sys, setup.config.solve_count());
    analysis.basis.mesh_hash = analysis.mesh.content_hash();

    std::vector<TrackedLabel> labels;
    for (const auto& l : setup.config.labels)
        labels.push_back({l.name, setup.initial_analysis.mode_of_label.at(l.name),
                          setup.initial_analysis.mode_of_label.at(l.name)});
    auto tracked = track_modes(analysis.basis, setup.initial_analysis.basis,
                               setup.initial_analysis.basis, labels, setup.config.tracking);
    for (const auto& t : tracked) analysis.mode_of_label[t.name] = t.index;

    auto ev = setup.evaluator->evaluate(analysis, false, nullptr, nullptr);
    require(ev.rows.size() == reported_rows.size(), "verify: row layout changed");
    double worst = 0;
    for (std::size_t i = 0; i < ev.rows.size(); ++i) {
        double denom = std::max({std::abs(reported_rows[i]), std::abs(ev.rows[i].value), 1e-12});
        worst = std::max(worst, std::abs(ev.rows[i].value - reported_rows[i]) / denom);
    }
    return worst;
}

} // namespace triwave
