#include "firstint/report.hpp"

#include <sstream>

namespace firstint {

using ordered_json = nlohmann::ordered_json;

Analysis analyze(const SystemSpec& spec, const AnalysisOptions& options) {
    Analysis a;
    a.spec = spec;
    a.options = options;
    a.solvability = frobenius_check(spec, spec.tol);
    if (spec.has_forcing()) {
        a.forcing_residual =
            forcing_compat_check(spec, unit_grid(spec.time_dim(), 5), spec.tol);
        a.solvability.forcing_residual = a.forcing_residual;
        if (*a.forcing_residual > 1e-6) {
            a.solvability.solvable = false;
            a.notes.push_back("forcing incompatible: mixed-partial residual " +
                              std::to_string(*a.forcing_residual));
        }
    }
    a.eigen = family_eigen_structures(spec, options.tol);
    if (!a.solvability.solvable && a.solvability.max_commutator_residual > spec.tol) {
        a.notes.push_back("system is not completely solvable; integral construction skipped");
        return a;
    }
    a.data = common_eigenvectors(spec, a.eigen, options.tol);
    a.spectral_ran = true;
    if (a.data.split_warning)
        a.notes.push_back("a degenerate common eigenspace resisted full splitting");

    IntegralBuilder builder(spec, a.data, options.seed, options.tol);
    if (spec.has_forcing() && a.solvability.solvable) {
        a.pool = builder.build_nonhomogeneous();
    } else if (!spec.has_forcing()) {
        a.pool = builder.build_autonomous();
        for (FirstIntegral& f : builder.build_nonautonomous()) a.pool.push_back(std::move(f));
    }
    a.chains = builder.chains();
    a.registry = builder.registry();
    for (const std::string& n : builder.notes()) a.notes.push_back(n);
    if (!a.pool.empty()) {
        a.assembly = assemble_general_integral(a.pool, spec, a.registry, options.seed,
                                               options.tol);
        if (!a.assembly.note.empty()) a.notes.push_back(a.assembly.note);
    }
    return a;
}

namespace {

ordered_json complex_json(cplx v) { return ordered_json::array({v.real(), v.imag()}); }

ordered_json cvec_json(const cvec& v) {
    ordered_json arr = ordered_json::array();
    for (const cplx& e : v) arr.push_back(complex_json(e));
    return arr;
}

ordered_json matrix_json(const CMatrix& m) {
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(complex_json(m.at(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

ordered_json analysis_json(const Analysis& a, const VerificationReport* verification) {
    ordered_json doc;
    doc["schema_version"] = 1;
    doc["tool"] = "firstint";
    doc["seed"] = a.options.seed;

    ordered_json system;
    system["kind"] = to_string(a.spec.kind);
    system["n"] = a.spec.n;
    system["m"] = a.spec.m;
    system["state_dim"] = a.spec.state_dim();
    system["time_dim"] = a.spec.time_dim();
    system["forced"] = a.spec.has_forcing();
    system["tol"] = a.spec.tol;
    doc["system"] = std::move(system);

    ordered_json solv;
    solv["solvable"] = a.solvability.solvable;
    solv["max_commutator_residual"] = a.solvability.max_commutator_residual;
    if (a.solvability.offending_pair)
        solv["offending_pair"] = ordered_json::array(
            {a.solvability.offending_pair->first, a.solvability.offending_pair->second});
    if (a.solvability.defect_witness)
        solv["defect_witness"] = matrix_json(*a.solvability.defect_witness);
    if (a.forcing_residual) solv["forcing_residual"] = *a.forcing_residual;
    doc["solvability"] = std::move(solv);

    ordered_json eigen = ordered_json::array();
    for (const EigenStructure& es : a.eigen) {
        ordered_json one;
        ordered_json evs = ordered_json::array();
        for (const EigenvalueInfo& info : es.eigenvalues) {
            ordered_json ev;
            ev["value"] = complex_json(info.value);
            ev["multiplicity"] = info.algebraic_multiplicity;
            ev["divisor_degrees"] = info.divisor_degrees;
            evs.push_back(std::move(ev));
        }
        one["eigenvalues"] = std::move(evs);
        one["clustering_ambiguous"] = es.clustering_ambiguous;
        eigen.push_back(std::move(one));
    }
    doc["eigen"] = std::move(eigen);

    if (a.spectral_ran) {
        ordered_json spectral;
        spectral["pivot"] = a.data.pivot;
        spectral["split_warning"] = a.data.split_warning;
        ordered_json tuples = ordered_json::array();
        for (const EigenTuple& t : a.data.tuples) {
            ordered_json tj;
            tj["vector"] = cvec_json(t.vector);
            tj["lambdas"] = cvec_json(t.lambdas);
            tj["is_real"] = t.is_real;
            if (t.conjugate_partner) tj["conjugate_partner"] = *t.conjugate_partner;
            tuples.push_back(std::move(tj));
        }
        spectral["tuples"] = std::move(tuples);
        ordered_json chains = ordered_json::array();
        for (const PsiChainData& c : a.chains) {
            ordered_json cj;
            cj["tuple"] = c.tuple_index;
            cj["direction"] = c.direction;
            cj["order"] = c.v.size();
            ordered_json mus = ordered_json::array();
            for (const cvec& row : c.mu) mus.push_back(cvec_json(row));
            cj["mu"] = std::move(mus);
            cj["mu_constant_violation"] = c.mu_constant_violation;
            cj["valid"] = c.valid;
            chains.push_back(std::move(cj));
        }
        spectral["chains"] = std::move(chains);
        doc["spectral"] = std::move(spectral);
    }

    ordered_json integrals = ordered_json::array();
    for (const FirstIntegral& f : a.assembly.selected) {
        ordered_json fj;
        fj["expr"] = render_expr(f.expr);
        fj["autonomous"] = f.autonomous;
        fj["complex_valued"] = f.complex_valued;
        fj["route"] = f.route;
        ordered_json excl = ordered_json::array();
        for (const Expr& g : f.excluded_hyperplanes) excl.push_back(render_expr(g));
        fj["excluded_hyperplanes"] = std::move(excl);
        fj["provenance"] = f.provenance;
        integrals.push_back(std::move(fj));
    }
    doc["integrals"] = std::move(integrals);
    doc["candidate_count"] = a.pool.size();
    doc["independence_rank"] = a.assembly.independence_rank;
    doc["autonomous_count"] = a.assembly.autonomous_count;
    doc["notes"] = a.notes;

    if (verification) {
        ordered_json vj;
        vj["seed"] = verification->seed;
        ordered_json cfg;
        cfg["sampling_box"] = 2.0;
        cfg["hyperplane_margin_scale"] = 1e-3;
        cfg["trajectory_span"] = 1.0;
        if (a.spec.has_forcing()) {
            cfg["forcing_grid_box"] = 1.0;
            cfg["forcing_grid_points_per_axis"] = 5;
        }
        vj["config"] = std::move(cfg);
        ordered_json per = ordered_json::array();
        for (const IntegralVerification& v : verification->per_integral) {
            ordered_json one;
            one["max_lie_residual"] = v.max_lie_residual;
            one["max_trajectory_drift"] = v.max_trajectory_drift;
            one["samples_used"] = v.samples_used;
            one["trajectories_used"] = v.trajectories_used;
            one["domain_events"] = v.domain_events;
            per.push_back(std::move(one));
        }
        vj["per_integral"] = std::move(per);
        vj["independence_rank"] = verification->independence_rank;
        vj["autonomous_count"] = verification->autonomous_count;
        if (verification->path_independence_gap)
            vj["path_independence_gap"] = *verification->path_independence_gap;
        if (verification->forcing_residual)
            vj["forcing_residual"] = *verification->forcing_residual;
        doc["verification"] = std::move(vj);
    }
    return doc;
}

std::string human_summary(const Analysis& a, const VerificationReport* verification) {
    std::ostringstream out;
    out << to_string(a.spec.kind) << " system, n=" << a.spec.n << ", m=" << a.spec.m;
    if (a.spec.has_forcing()) out << ", forced";
    out << "\n";
    out << "solvable: " << (a.solvability.solvable ? "yes" : "no")
        << " (commutator residual " << a.solvability.max_commutator_residual << ")\n";
    if (a.forcing_residual)
        out << "forcing compatibility residual: " << *a.forcing_residual << "\n";
    out << "integrals: " << a.assembly.selected.size() << " selected of " << a.pool.size()
        << " candidates, independence rank " << a.assembly.independence_rank << " ("
        << a.assembly.autonomous_count << " autonomous)\n";
    for (const FirstIntegral& f : a.assembly.selected)
        out << "  [" << f.route << (f.autonomous ? ", autonomous" : "") << "] "
            << render_expr(f.expr) << "\n";
    if (verification) {
        double worst_lie = 0.0, worst_drift = 0.0;
        for (const IntegralVerification& v : verification->per_integral) {
            worst_lie = std::max(worst_lie, v.max_lie_residual);
            worst_drift = std::max(worst_drift, v.max_trajectory_drift);
        }
        out << "verification: max lie residual " << worst_lie << ", max drift " << worst_drift;
        if (verification->path_independence_gap)
            out << ", path independence gap " << *verification->path_independence_gap;
        out << "\n";
    }
    for (const std::string& n : a.notes) out << "note: " << n << "\n";
    return out.str();
}

} // namespace firstint
