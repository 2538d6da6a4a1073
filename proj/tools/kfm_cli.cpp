#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kfm/amalgam.hpp"
#include "kfm/cap.hpp"
#include "kfm/graphs.hpp"
#include "kfm/invariant.hpp"
#include "kfm/pebble_game.hpp"
#include "kfm/program.hpp"
#include "kfm/tableau.hpp"

namespace {

using namespace kfm;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Wraps parser exceptions so every file error carries its path.
template <typename Parser>
auto load(const std::string& path, Parser parse) {
    try {
        return parse(read_file(path));
    } catch (const ParseError& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

FiniteStructure load_structure(const std::string& path) {
    return load(path, [](const std::string& t) { return parse_structure(t); });
}

Tableau load_tableau(const std::string& path) {
    return load(path, [](const std::string& t) { return parse_tableau(t); });
}

std::vector<int> split_ints(const std::string& csv) {
    std::vector<int> out;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

std::vector<std::string> split_names(const std::string& csv) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::set<int> to_set(const std::vector<int>& v) { return std::set<int>(v.begin(), v.end()); }

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error(out_path + ": cannot write");
    out << text;
}

std::string tuple_text(const Tuple& t) {
    std::ostringstream out;
    out << "(";
    for (std::size_t i = 0; i < t.size(); ++i) out << (i ? "," : "") << t[i];
    out << ")";
    return out.str();
}

std::string elems_text(const std::vector<int>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
    return out.str();
}

// Shared closure flags; a second set with a fallback covers the graph side.
struct ClosureFlags {
    std::string mode = "trivial";
    int k = 2;
    int threshold = 1;

    ClosureConfig config() const {
        if (mode == "trivial") return ClosureConfig::trivial();
        if (mode == "counting") return ClosureConfig::counting(k, threshold);
        throw std::runtime_error("closure mode must be trivial or counting");
    }
};

void add_closure_flags(CLI::App* sc, ClosureFlags& f, const std::string& prefix,
                       const std::string& what) {
    sc->add_option("--" + prefix + "closure", f.mode, "closure mode for " + what)
        ->check(CLI::IsMember({"trivial", "counting"}));
    sc->add_option("--" + prefix + "ck", f.k, "counting closure width for " + what);
    sc->add_option("--" + prefix + "cthreshold", f.threshold,
                   "counting closure threshold for " + what);
}

std::string run_report(const RunTrace& t) {
    std::ostringstream out;
    out << "world " << t.world.size << "\n";
    out << "initial " << elems_text(t.initial) << "\n";
    out << "chain 0 : " << elems_text(t.chain[0]) << "\n";
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const RunStep& s = t.steps[i];
        out << "step " << i << " sigma " << s.sigma << " pi " << s.pi << " index " << s.pi_index
            << " acted " << tuple_text(s.acted) << "\n";
        for (const auto& r : s.responses)
            out << "  request " << tuple_text(r.request) << " chosen " << tuple_text(r.chosen)
                << " class " << r.class_id << " candidates " << r.candidates.size() << "\n";
        out << "chain " << i + 1 << " : " << elems_text(t.chain[i + 1]) << "\n";
    }
    out << "stabilized " << (t.stabilized ? "true" : "false") << " complete "
        << (t.complete ? "true" : "false") << " stabilization-step " << t.stabilization_step
        << "\n";
    return out.str();
}

std::string pad_index(long long idx, long long count) {
    int width = 1;
    for (long long c = count - 1; c >= 10; c /= 10) ++width;
    std::ostringstream out;
    out.fill('0');
    out.width(width);
    out << idx;
    return out.str();
}

// Off-diagonal pair list fixing the bit order of digraph enumeration.
std::vector<std::pair<int, int>> arc_slots(int n) {
    std::vector<std::pair<int, int>> slots;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) slots.push_back({i, j});
    return slots;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"workbench for k-variable logic over finite structures"};
    app.require_subcommand(1);
    int rc = 0;

    // types <model> -k K
    std::string ty_path, ty_out;
    int ty_k = 2;
    auto* ty = app.add_subcommand("types", "partition the k-tuples of a structure by color");
    ty->add_option("model", ty_path, "structure file")->required();
    ty->add_option("-k", ty_k, "tuple width")->required();
    ty->add_option("-o,--out", ty_out, "write the partition to a file");
    ty->callback([&] {
        FiniteStructure m = load_structure(ty_path);
        emit(serialize_partition(refine_k_types(m, ty_k), 0), ty_out);
    });

    // equiv <a> <b> -k K [--game]
    std::string eq_a, eq_b;
    int eq_k = 2;
    bool eq_game = false;
    auto* eq = app.add_subcommand("equiv", "decide k-variable equivalence of two structures");
    eq->add_option("a", eq_a, "first structure file")->required();
    eq->add_option("b", eq_b, "second structure file")->required();
    eq->add_option("-k", eq_k, "variable budget")->required();
    eq->add_flag("--game", eq_game, "decide with the pebble game instead of refinement");
    eq->callback([&] {
        FiniteStructure a = load_structure(eq_a), b = load_structure(eq_b);
        bool same = eq_game ? pebble_game_equivalent(a, b, eq_k) : k_equivalent(a, b, eq_k);
        std::cout << (same ? "equivalent" : "not equivalent") << "\n";
        rc = same ? 0 : 1;
    });

    // invariant <model> -k K
    std::string inv_path, inv_out;
    int inv_k = 2;
    auto* iv = app.add_subcommand("invariant", "build the canonical class structure");
    iv->add_option("model", inv_path, "structure file")->required();
    iv->add_option("-k", inv_k, "variable budget")->required();
    iv->add_option("-o,--out", inv_out, "write the invariant to a file");
    iv->callback([&] {
        FiniteStructure m = load_structure(inv_path);
        emit(serialize_invariant(build_invariant(m, inv_k)), inv_out);
    });

    // tableau <model> -k K
    std::string tb_path, tb_out;
    int tb_k = 2;
    auto* tb = app.add_subcommand("tableau", "encode a structure as a typed tableau");
    tb->add_option("model", tb_path, "structure file")->required();
    tb->add_option("-k", tb_k, "variable budget")->required();
    tb->add_option("-o,--out", tb_out, "write the tableau to a file");
    tb->callback([&] {
        FiniteStructure m = load_structure(tb_path);
        emit(serialize_tableau(to_tableau(m, theory_of(m, tb_k))), tb_out);
    });

    // realize <tableau> <model>
    std::string rz_tab, rz_model, rz_out;
    auto* rz = app.add_subcommand("realize", "decode a tableau back into a structure");
    rz->add_option("tableau", rz_tab, "tableau file")->required();
    rz->add_option("model", rz_model, "reference structure fixing the theory")->required();
    rz->add_option("-o,--out", rz_out, "write the structure to a file");
    rz->callback([&] {
        Tableau t = load_tableau(rz_tab);
        FiniteStructure m = load_structure(rz_model);
        emit(serialize_structure(realize(t, theory_of(m, t.k))), rz_out);
    });

    // check <tableau> <model>
    std::string ck_tab, ck_model;
    auto* ck = app.add_subcommand("check", "check a tableau against the theory's axioms");
    ck->add_option("tableau", ck_tab, "tableau file")->required();
    ck->add_option("model", ck_model, "reference structure fixing the theory")->required();
    ck->callback([&] {
        Tableau t = load_tableau(ck_tab);
        FiniteStructure m = load_structure(ck_model);
        AxiomReport rep = check_axioms(t, theory_of(m, t.k));
        for (int i = 0; i < 6; ++i) {
            std::cout << axiom_name(i) << " " << (rep.axiom[i].pass ? "pass" : "fail");
            if (!rep.axiom[i].pass) std::cout << " " << rep.axiom[i].witness;
            std::cout << "\n";
        }
        std::cout << (rep.all_pass() ? "all axioms pass" : "axiom violations found") << "\n";
    });

    // amalgamate <shared> <left> <right> <model> [--emb0 ...] [--emb1 ...]
    std::string am_a, am_m0, am_m1, am_model, am_e0, am_e1, am_out;
    auto* am = app.add_subcommand("amalgamate", "amalgamate two tableaux over a shared part");
    am->add_option("shared", am_a, "shared tableau file")->required();
    am->add_option("left", am_m0, "left tableau file")->required();
    am->add_option("right", am_m1, "right tableau file")->required();
    am->add_option("model", am_model, "reference structure fixing the theory")->required();
    am->add_option("--emb0", am_e0, "comma list embedding the shared part left (default identity)");
    am->add_option("--emb1", am_e1, "comma list embedding the shared part right (default identity)");
    am->add_option("-o,--out", am_out, "write the amalgam tableau to a file");
    am->callback([&] {
        Tableau a = load_tableau(am_a), m0 = load_tableau(am_m0), m1 = load_tableau(am_m1);
        FiniteStructure model = load_structure(am_model);
        std::vector<int> e0 = split_ints(am_e0), e1 = split_ints(am_e1);
        if (e0.empty())
            for (int i = 0; i < a.size; ++i) e0.push_back(i);
        if (e1.empty())
            for (int i = 0; i < a.size; ++i) e1.push_back(i);
        AmalgamResult res = amalgamate(a, m0, m1, theory_of(model, a.k), e0, e1);
        std::cout << "size " << res.amalgam.size << "\n";
        for (auto [s, t] : res.g0.pairs()) std::cout << "g0 " << s << " " << t << "\n";
        for (auto [s, t] : res.g1.pairs()) std::cout << "g1 " << s << " " << t << "\n";
        std::cout << "steps " << res.log.size() << "\n";
        emit(serialize_tableau(res.amalgam), am_out);
    });

    // cap <tableau> <model> [--max-size N]
    std::string cp_tab, cp_model, cp_out;
    int cp_max = -1;
    auto* cp = app.add_subcommand("cap", "search for a full model extending a partial tableau");
    cp->add_option("tableau", cp_tab, "partial tableau file")->required();
    cp->add_option("model", cp_model, "reference structure fixing the theory")->required();
    cp->add_option("--max-size", cp_max, "largest universe to try (default size+2)");
    cp->add_option("-o,--out", cp_out, "write the extension to a file");
    cp->callback([&] {
        Tableau t = load_tableau(cp_tab);
        FiniteStructure m = load_structure(cp_model);
        int bound = cp_max > 0 ? cp_max : t.size + 2;
        auto found = cap_search(t, theory_of(m, t.k), bound);
        if (found) {
            std::cout << "extension of size " << found->size << "\n";
            emit(serialize_tableau(*found), cp_out);
        } else {
            std::cout << "no extension up to size " << bound << "\n";
        }
    });

    // ifp <model> --formula F -r R [--aux X]
    std::string fp_path, fp_formula, fp_aux = "X";
    int fp_r = 1;
    auto* fp = app.add_subcommand("ifp", "print the stage chain of an inflationary fixed point");
    fp->add_option("model", fp_path, "structure file")->required();
    fp->add_option("--formula", fp_formula, "s-expression over x0..x{r-1} and the stage symbol")
        ->required();
    fp->add_option("-r", fp_r, "tuple width of the stage relation")->required();
    fp->add_option("--aux", fp_aux, "stage relation symbol");
    fp->callback([&] {
        FiniteStructure m = load_structure(fp_path);
        ExpandedFormula ef = make_expanded(parse_formula(fp_formula), fp_r, fp_aux);
        StageSequence seq = ifp_stages(m, ef);
        for (std::size_t t = 0; t < seq.stages.size(); ++t) {
            std::cout << "stage " << t << " :";
            for (const auto& tup : seq.stages[t]) std::cout << " " << tuple_text(tup);
            std::cout << "\n";
        }
        std::cout << "stabilization-index " << seq.stabilization_index << "\n";
    });

    // dsep <dag> --x A --y B [--z C]
    std::string ds_path, ds_x, ds_y, ds_z;
    auto* ds = app.add_subcommand("dsep", "decide d-separation of vertex sets in a dag");
    ds->add_option("dag", ds_path, "dag file with named vertices")->required();
    ds->add_option("--x", ds_x, "comma list of vertex names")->required();
    ds->add_option("--y", ds_y, "comma list of vertex names")->required();
    ds->add_option("--z", ds_z, "comma list of conditioning vertex names");
    ds->callback([&] {
        NamedDag nd = load(ds_path, [](const std::string& t) { return parse_dag(t); });
        auto ids = [&](const std::string& csv) {
            std::vector<int> out;
            for (const auto& name : split_names(csv)) out.push_back(nd.vertex(name));
            return out;
        };
        bool sep = d_separated(nd.g, ids(ds_x), ids(ds_y), ids(ds_z));
        std::cout << (sep ? "d-separated" : "not d-separated") << "\n";
        rc = sep ? 0 : 1;
    });

    // run-program <program> <world> --start S
    std::string rp_prog, rp_world, rp_start, rp_out;
    ClosureFlags rp_cfg;
    int rp_max = 0;
    auto* rp = app.add_subcommand("run-program", "evaluate a pre-program from a start set");
    rp->add_option("program", rp_prog, "program file")->required();
    rp->add_option("world", rp_world, "structure file")->required();
    rp->add_option("--start", rp_start, "comma list of start elements")->required();
    rp->add_option("--max-steps", rp_max, "step bound (default world size + 1)");
    add_closure_flags(rp, rp_cfg, "", "the run");
    rp->add_option("-o,--out", rp_out, "write the trace to a file");
    rp->callback([&] {
        Program p = load(rp_prog, [](const std::string& t) { return parse_program(t); });
        FiniteStructure w = load_structure(rp_world);
        RunTrace t =
            eval_star(to_set(split_ints(rp_start)), p.spec, p.commands, w, rp_cfg.config(), rp_max);
        emit(run_report(t), rp_out);
    });

    // cg <program> <world> --start S
    std::string cg_prog, cg_world, cg_start, cg_out;
    ClosureFlags cg_run, cg_graph;
    bool cg_graph_set = false;
    auto* cgc = app.add_subcommand("cg", "export the construction graph of a run");
    cgc->add_option("program", cg_prog, "program file")->required();
    cgc->add_option("world", cg_world, "structure file")->required();
    cgc->add_option("--start", cg_start, "comma list of start elements")->required();
    add_closure_flags(cgc, cg_run, "", "the run");
    add_closure_flags(cgc, cg_graph, "graph-", "the graph edges");
    cgc->add_flag("--split-closure", cg_graph_set,
                  "use the graph- closure flags instead of the run's");
    cgc->add_option("-o,--out", cg_out, "write the graph to a file");
    cgc->callback([&] {
        Program p = load(cg_prog, [](const std::string& t) { return parse_program(t); });
        FiniteStructure w = load_structure(cg_world);
        RunTrace t =
            eval_star(to_set(split_ints(cg_start)), p.spec, p.commands, w, cg_run.config());
        ClosureConfig gc = cg_graph_set ? cg_graph.config() : cg_run.config();
        emit(serialize_cg(build_construction_graph(t, p.spec, p.commands, gc)), cg_out);
    });

    // locsep <program> <world> --start S --a A --b B [--c C]
    std::string ls_prog, ls_world, ls_start, ls_a, ls_b, ls_c;
    ClosureFlags ls_run, ls_graph;
    bool ls_graph_set = false;
    int ls_limit = 12;
    auto* ls = app.add_subcommand("locsep", "decide local separation over a run's graph");
    ls->add_option("program", ls_prog, "program file")->required();
    ls->add_option("world", ls_world, "structure file")->required();
    ls->add_option("--start", ls_start, "comma list of start elements")->required();
    ls->add_option("--a", ls_a, "comma list of base elements")->required();
    ls->add_option("--b", ls_b, "comma list of base elements")->required();
    ls->add_option("--c", ls_c, "comma list of base elements");
    ls->add_option("--limit", ls_limit, "interpolant sweep bound");
    add_closure_flags(ls, ls_run, "", "the run");
    add_closure_flags(ls, ls_graph, "graph-", "the graph and separation");
    ls->add_flag("--split-closure", ls_graph_set,
                 "use the graph- closure flags instead of the run's");
    ls->callback([&] {
        Program p = load(ls_prog, [](const std::string& t) { return parse_program(t); });
        FiniteStructure w = load_structure(ls_world);
        RunTrace t =
            eval_star(to_set(split_ints(ls_start)), p.spec, p.commands, w, ls_run.config());
        ClosureConfig gc = ls_graph_set ? ls_graph.config() : ls_run.config();
        ConstructionGraph cg = build_construction_graph(t, p.spec, p.commands, gc);
        bool sep = locally_separated(cg, to_set(split_ints(ls_a)), to_set(split_ints(ls_b)),
                                     to_set(split_ints(ls_c)), gc, ls_limit);
        std::cout << (sep ? "locally separated" : "not locally separated") << "\n";
        rc = sep ? 0 : 1;
    });

    // devmem <program> <world> --start S --length L --params P --colors C --d D [--c C]
    std::string dm_prog, dm_world, dm_start, dm_params, dm_colors, dm_c, dm_d;
    ClosureFlags dm_run, dm_graph;
    bool dm_graph_set = false;
    int dm_length = 1, dm_limit = 12;
    auto* dm = app.add_subcommand("devmem", "decide deviation membership over a run's graph");
    dm->add_option("program", dm_prog, "program file")->required();
    dm->add_option("world", dm_world, "structure file")->required();
    dm->add_option("--start", dm_start, "comma list of start elements")->required();
    dm->add_option("--length", dm_length, "tuple length of the type")->required();
    dm->add_option("--params", dm_params, "comma list of parameter elements");
    dm->add_option("--colors", dm_colors, "comma list of admitted joint colors")->required();
    dm->add_option("--c", dm_c, "comma list for the smaller base");
    dm->add_option("--d", dm_d, "comma list for the reference set")->required();
    dm->add_option("--limit", dm_limit, "interpolant sweep bound");
    add_closure_flags(dm, dm_run, "", "the run");
    add_closure_flags(dm, dm_graph, "graph-", "the graph and separation");
    dm->add_flag("--split-closure", dm_graph_set,
                 "use the graph- closure flags instead of the run's");
    dm->callback([&] {
        Program p = load(dm_prog, [](const std::string& t) { return parse_program(t); });
        FiniteStructure w = load_structure(dm_world);
        RunTrace t =
            eval_star(to_set(split_ints(dm_start)), p.spec, p.commands, w, dm_run.config());
        ClosureConfig gc = dm_graph_set ? dm_graph.config() : dm_run.config();
        ConstructionGraph cg = build_construction_graph(t, p.spec, p.commands, gc);
        TupleTypeSpec spec{dm_length, split_ints(dm_params), to_set(split_ints(dm_colors))};
        bool member = deviation_member(cg, spec, to_set(split_ints(dm_c)),
                                       to_set(split_ints(dm_d)), gc, dm_limit);
        std::cout << (member ? "member" : "not a member") << "\n";
        rc = member ? 0 : 1;
    });

    // corpus all-digraphs <n> / corpus random <n> <count> --seed S
    auto* co = app.add_subcommand("corpus", "generate structure files for sweeps");
    co->require_subcommand(1);
    std::string ca_dir = ".", cr_dir = ".";
    int ca_n = 2, cr_n = 4, cr_count = 10;
    std::uint64_t cr_seed = 0;
    auto* ca = co->add_subcommand("all-digraphs", "every digraph on n labeled vertices");
    ca->add_option("n", ca_n, "vertex count (at most 5)")->required();
    ca->add_option("--dir", ca_dir, "output directory");
    ca->callback([&] {
        if (ca_n < 1 || ca_n > 5) throw std::runtime_error("vertex count must be within 1..5");
        std::filesystem::create_directories(ca_dir);
        auto slots = arc_slots(ca_n);
        const long long count = 1ll << slots.size();
        for (long long mask = 0; mask < count; ++mask) {
            FiniteStructure m(Signature{{{"E", 2}}}, ca_n);
            for (std::size_t b = 0; b < slots.size(); ++b)
                if (mask & (1ll << b)) m.add_fact(0, {slots[b].first, slots[b].second});
            std::string name = "digraph_n" + std::to_string(ca_n) + "_" +
                               pad_index(mask, count) + ".str";
            std::filesystem::path p = std::filesystem::path(ca_dir) / name;
            emit(serialize_structure(m), p.string());
            std::cout << p.string() << "\n";
        }
    });
    auto* cr = co->add_subcommand("random", "seeded random digraphs on n vertices");
    cr->add_option("n", cr_n, "vertex count (at most 8)")->required();
    cr->add_option("count", cr_count, "number of structures")->required();
    cr->add_option("--seed", cr_seed, "generator seed, echoed in the report");
    cr->add_option("--dir", cr_dir, "output directory");
    cr->callback([&] {
        if (cr_n < 1 || cr_n > 8) throw std::runtime_error("vertex count must be within 1..8");
        if (cr_count < 1) throw std::runtime_error("count must be positive");
        std::filesystem::create_directories(cr_dir);
        std::mt19937_64 rng(cr_seed);
        std::cout << "seed " << cr_seed << "\n";
        auto slots = arc_slots(cr_n);
        for (int idx = 0; idx < cr_count; ++idx) {
            FiniteStructure m(Signature{{{"E", 2}}}, cr_n);
            for (const auto& [i, j] : slots)
                if (rng() % 2) m.add_fact(0, {i, j});
            std::string name = "random_n" + std::to_string(cr_n) + "_s" +
                               std::to_string(cr_seed) + "_" + pad_index(idx, cr_count) + ".str";
            std::filesystem::path p = std::filesystem::path(cr_dir) / name;
            emit(serialize_structure(m), p.string());
            std::cout << p.string() << "\n";
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return rc;
}
