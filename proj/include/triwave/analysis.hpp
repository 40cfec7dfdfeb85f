#pragma once

#include "triwave/coupling.hpp"

namespace triwave {

// Everything derived from one design evaluation, bundled so constraint code
// and the optimization loop can pass it around as a unit.
struct DesignAnalysis {
    ExtrudedMesh mesh;
    ElementCache cache;
    SystemMatrices sys;
    ModalBasis basis;
    std::map<std::string, int> mode_of_label;

    int mode(const std::string& label) const {
        auto it = mode_of_label.find(label);
        if (it == mode_of_label.end()) fail("no tracked mode labelled '", label, "'");
        return it->second;
    }

    double frequency(const std::string& label) const { return basis.frequencies(mode(label)); }
};

inline DesignAnalysis analyze_mesh(ExtrudedMesh mesh, const Material& material, int mode_count,
                                   EigenSolverKind kind = EigenSolverKind::automatic) {
    DesignAnalysis a;
    a.mesh = std::move(mesh);
    a.cache.build(a.mesh);
    a.sys = assemble_system(a.mesh, material, a.cache);
    a.basis = solve_modes(a.sys, mode_count, kind);
    a.basis.mesh_hash = a.mesh.content_hash();
    return a;
}

} // namespace triwave
