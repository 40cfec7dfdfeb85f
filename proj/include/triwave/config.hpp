#pragma once

#include <filesystem>
#include <fstream>
#include <optional>

#include "triwave/constraints.hpp"
#include "triwave/mma.hpp"
#include "triwave/modal.hpp"

namespace triwave {

// Parses "<number><unit>" with the unit suffixes used in problem files:
// lengths (m, mm, um, nm), frequencies (Hz, kHz, MHz, GHz), pressures
// (Pa ... GPa) and percent. Bare numbers pass through unchanged.
inline double parse_quantity(const std::string& text, const std::string& context) {
    static const std::vector<std::pair<std::string, double>> units = {
        {"GHz", 1e9}, {"MHz", 1e6}, {"kHz", 1e3}, {"Hz", 1.0},  {"GPa", 1e9}, {"MPa", 1e6},
        {"kPa", 1e3}, {"Pa", 1.0},  {"nm", 1e-9}, {"um", 1e-6}, {"mm", 1e-3}, {"m", 1.0},
        {"%", 0.01}};
    std::string num = text;
    double mult = 1.0;
    for (const auto& [suffix, factor] : units) {
        if (text.size() > suffix.size() &&
            text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0) {
            num = text.substr(0, text.size() - suffix.size());
            mult = factor;
            break;
        }
    }
    try {
        std::size_t used = 0;
        double v = std::stod(num, &used);
        require(used == num.size(), context, ": trailing characters in number '", text, "'");
        return v * mult;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(context, ": cannot parse number '", text, "'");
    }
}

struct ModeLabel {
    std::string name;
    int initial_number = 0; // 1-based mode number in the initial design
};

struct ProblemConfig {
    std::filesystem::path config_path;
    std::filesystem::path mesh_path;

    Material material;
    std::set<std::string> movable_regions = {"spring"};
    int decay_radius = 3;
    double box_limit = 0.5e-6;
    bool symmetry_x = false, symmetry_y = false;

    std::vector<ModeLabel> labels;
    TrackingConfig tracking;
    int headroom = 5;
    int max_iterations = 150;
    double feasibility_tol = 1e-3;
    double step_tol = 1e-12;
    double ratio_floor = 1e-3;

    MmaOptions mma;
    std::vector<ConstraintSpec> constraints;

    int solve_count() const {
        int max_label = 0;
        for (const auto& l : labels) max_label = std::max(max_label, l.initial_number);
        return max_label + headroom;
    }

    const ModeLabel& label(const std::string& name) const {
        for (const auto& l : labels)
            if (l.name == name) return l;
        fail("config references unknown mode label '", name, "'");
    }
};

namespace detail {

inline std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline bool take_option(std::vector<std::string>& tokens, const std::string& key, std::string* value) {
    for (auto it = tokens.begin(); it != tokens.end(); ++it) {
        if (it->rfind(key + "=", 0) == 0) {
            *value = it->substr(key.size() + 1);
            tokens.erase(it);
            return true;
        }
    }
    return false;
}

inline ConstraintSpec parse_constraint(const std::string& name, const std::string& rhs,
                                       const std::string& context) {
    auto tokens = split_tokens(rhs);
    require(!tokens.empty(), context, ": empty constraint definition");
    std::string kind_name = tokens.front();
    tokens.erase(tokens.begin());

    ConstraintSpec spec;
    spec.name = name;
    std::string opt;
    if (take_option(tokens, "scale", &opt)) spec.scale = parse_quantity(opt, context);

    auto need = [&](std::size_t n) {
        require(tokens.size() == n, context, ": constraint '", kind_name, "' expects ", n,
                " positional arguments, got ", tokens.size());
    };

    if (kind_name == "couplingAbsLE" || kind_name == "couplingAbsGE") {
        spec.kind = kind_name == "couplingAbsLE" ? ConstraintKind::coupling_abs_le
                                                 : ConstraintKind::coupling_abs_ge;
        require(take_option(tokens, "factor", &opt), context, ": coupling constraint needs factor=");
        spec.factor = parse_quantity(opt, context);
        need(4);
        require(tokens[0] == "bar" || tokens[0] == "tilde", context,
                ": coupling aggregate must be 'bar' or 'tilde'");
        spec.bar = tokens[0] == "bar";
        spec.modes = {tokens[1], tokens[2], tokens[3]};
    } else if (kind_name == "freqBand") {
        spec.kind = ConstraintKind::freq_band;
        require(take_option(tokens, "tol", &opt), context, ": freqBand needs tol=");
        spec.tol = parse_quantity(opt, context);
        need(1);
        spec.modes = {tokens[0]};
    } else if (kind_name == "freqGapGE") {
        spec.kind = ConstraintKind::freq_gap_ge;
        need(3);
        spec.modes = {tokens[0], tokens[1]};
        spec.bound = parse_quantity(tokens[2], context);
    } else if (kind_name == "resonanceDetuneLE") {
        spec.kind = ConstraintKind::resonance_detune_le;
        need(3);
        spec.modes = {tokens[0], tokens[1]};
        spec.bound = parse_quantity(tokens[2], context);
    } else if (kind_name == "eigvecRatioLE") {
        spec.kind = ConstraintKind::eigvec_ratio_le;
        require(take_option(tokens, "factor", &opt), context, ": eigvecRatioLE needs factor=");
        spec.ratio_factor = parse_quantity(opt, context);
        need(1);
        spec.modes = {tokens[0]};
    } else if (kind_name == "minWidth") {
        spec.kind = ConstraintKind::min_width;
        need(1);
        spec.bound = parse_quantity(tokens[0], context);
    } else if (kind_name == "minGap") {
        spec.kind = ConstraintKind::min_gap;
        need(1);
        spec.bound = parse_quantity(tokens[0], context);
    } else {
        fail(context, ": unknown constraint kind '", kind_name, "'");
    }
    return spec;
}

} // namespace detail

inline ProblemConfig parse_config(std::istream& is, const std::filesystem::path& path) {
    ProblemConfig cfg;
    cfg.config_path = path;

    std::string line, section;
    int lineno = 0;
    bool objective_seen = false;

    while (std::getline(is, line)) {
        ++lineno;
        std::string context = path.string() + ":" + std::to_string(lineno);
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        if (line.front() == '[') {
            require(line.back() == ']', context, ": malformed section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto eq = line.find('=');
        require(eq != std::string::npos, context, ": expected 'key = value'");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            auto a = s.find_first_not_of(" \t");
            auto b = s.find_last_not_of(" \t");
            s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
        };
        trim(key);
        trim(value);
        require(!key.empty() && !value.empty(), context, ": expected 'key = value'");

        if (section == "problem") {
            if (key == "mesh")
                cfg.mesh_path = path.parent_path() / value;
            else if (key == "maxIter")
                cfg.max_iterations = static_cast<int>(parse_quantity(value, context));
            else if (key == "feasTol")
                cfg.feasibility_tol = parse_quantity(value, context);
            else if (key == "stepTol")
                cfg.step_tol = parse_quantity(value, context);
            else if (key == "headroom")
                cfg.headroom = static_cast<int>(parse_quantity(value, context));
            else if (key == "ratioFloor")
                cfg.ratio_floor = parse_quantity(value, context);
            else
                fail(context, ": unknown key '", key, "' in [problem]");
        } else if (section == "material") {
            if (key == "youngsModulus")
                cfg.material.youngs_modulus = parse_quantity(value, context);
            else if (key == "poissonRatio")
                cfg.material.poisson_ratio = parse_quantity(value, context);
            else if (key == "density")
                cfg.material.density = parse_quantity(value, context);
            else
                fail(context, ": unknown key '", key, "' in [material]");
        } else if (section == "shape") {
            if (key == "movable") {
                cfg.movable_regions.clear();
                for (const auto& tag : detail::split_tokens(value)) cfg.movable_regions.insert(tag);
            } else if (key == "decayRadius")
                cfg.decay_radius = static_cast<int>(parse_quantity(value, context));
            else if (key == "boxLimit")
                cfg.box_limit = parse_quantity(value, context);
            else if (key == "symmetry") {
                cfg.symmetry_x = value == "x" || value == "xy";
                cfg.symmetry_y = value == "y" || value == "xy";
                require(value == "none" || value == "x" || value == "y" || value == "xy", context,
                        ": symmetry must be none|x|y|xy");
            } else
                fail(context, ": unknown key '", key, "' in [shape]");
        } else if (section == "tracking") {
            if (key == "weightPrevious")
                cfg.tracking.weight_previous = parse_quantity(value, context);
            else if (key == "weightInitial")
                cfg.tracking.weight_initial = parse_quantity(value, context);
            else if (key == "lostThreshold")
                cfg.tracking.lost_threshold = parse_quantity(value, context);
            else
                fail(context, ": unknown key '", key, "' in [tracking]");
        } else if (section == "mma") {
            if (key == "moveLimit")
                cfg.mma.move_limit = parse_quantity(value, context);
            else if (key == "asymptoteInit")
                cfg.mma.asymptote_init = parse_quantity(value, context);
            else if (key == "asymptoteShrink")
                cfg.mma.asymptote_shrink = parse_quantity(value, context);
            else if (key == "asymptoteGrow")
                cfg.mma.asymptote_grow = parse_quantity(value, context);
            else if (key == "kktTolerance")
                cfg.mma.kkt_tolerance = parse_quantity(value, context);
            else if (key == "constraintPenalty")
                cfg.mma.constraint_penalty = parse_quantity(value, context);
            else
                fail(context, ": unknown key '", key, "' in [mma]");
        } else if (section == "modes") {
            int number = static_cast<int>(parse_quantity(value, context));
            require(number >= 1, context, ": mode numbers are 1-based");
            cfg.labels.push_back({key, number});
        } else if (section == "constraints") {
            cfg.constraints.push_back(detail::parse_constraint(key, value, context));
        } else if (section == "objective") {
            require(key == "kind" && value == "squaredNorm", context,
                    ": only 'kind = squaredNorm' is supported");
            objective_seen = true;
        } else {
            fail(context, ": unknown section [", section, "]");
        }
    }
    (void)objective_seen;

    require(!cfg.mesh_path.empty(), path.string(), ": [problem] mesh is required");
    require(!cfg.labels.empty(), path.string(), ": [modes] must define at least one label");
    for (const auto& s : cfg.constraints)
        for (const auto& label : s.modes) cfg.label(label); // validates references
    return cfg;
}

inline ProblemConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open config file: ", path);
    return parse_config(is, path);
}

} // namespace triwave
