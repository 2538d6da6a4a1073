#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "kfm/graphs.hpp"
#include "kfm/invariant.hpp"
#include "kfm/program.hpp"
#include "kfm/tableau.hpp"

using namespace kfm;

namespace {

struct CmdResult {
    int status = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    std::string cmd = std::string(KFM_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    int raw = pclose(pipe);
    REQUIRE(raw != -1);
    r.status = WEXITSTATUS(raw);
    return r;
}

std::string data_path(const std::string& name) {
    return (std::filesystem::path(KFM_DATA_DIR) / name).string();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string read_data(const std::string& name) { return slurp(data_path(name)); }

// Fresh scratch directory per test run; sections clean up what they create.
std::filesystem::path scratch_dir() {
    auto p = std::filesystem::temp_directory_path() / "kfm_cli_scratch";
    std::filesystem::create_directories(p);
    return p;
}

int count_lines_with(const std::string& text, const std::string& prefix) {
    int n = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(prefix, 0) == 0) ++n;
    return n;
}

}  // namespace

TEST_CASE("equivalence verdicts drive the exit code", "[cli]") {
    std::string cycle = data_path("cycle6.str"), path = data_path("path4.str");

    CmdResult self = run_cli("equiv " + cycle + " " + cycle + " -k 2");
    CHECK(self.status == 0);
    CHECK(self.out == "equivalent\n");

    CmdResult diff = run_cli("equiv " + cycle + " " + path + " -k 2");
    CHECK(diff.status == 1);
    CHECK(diff.out == "not equivalent\n");

    CmdResult game = run_cli("equiv " + cycle + " " + path + " -k 2 --game");
    CHECK(game.status == 1);
    CHECK(game.out == "not equivalent\n");
}

TEST_CASE("d-separation verdicts and the collider example", "[cli]") {
    std::string collider = data_path("collider.dag"), chain = data_path("chain.dag");

    CmdResult open = run_cli("dsep " + collider + " --x a --y b --z c");
    CHECK(open.status == 1);
    CHECK(open.out == "not d-separated\n");

    CmdResult closed = run_cli("dsep " + collider + " --x a --y b");
    CHECK(closed.status == 0);
    CHECK(closed.out == "d-separated\n");

    CmdResult blocked = run_cli("dsep " + chain + " --x a --y c --z b");
    CHECK(blocked.status == 0);
    CHECK(blocked.out == "d-separated\n");

    CmdResult through = run_cli("dsep " + chain + " --x a --y c");
    CHECK(through.status == 1);
}

TEST_CASE("artifact commands match the library serializers byte for byte", "[cli]") {
    std::string cycle = data_path("cycle6.str");
    FiniteStructure m = parse_structure(read_data("cycle6.str"));

    SECTION("types") {
        CmdResult r = run_cli("types " + cycle + " -k 2");
        CHECK(r.status == 0);
        CHECK(r.out == serialize_partition(refine_k_types(m, 2), 0));
    }

    SECTION("invariant, twice, and through -o") {
        std::string expect = serialize_invariant(build_invariant(m, 3));
        CmdResult a = run_cli("invariant " + cycle + " -k 3");
        CmdResult b = run_cli("invariant " + cycle + " -k 3");
        CHECK(a.status == 0);
        CHECK(a.out == expect);
        CHECK(a.out == b.out);

        auto out_file = scratch_dir() / "inv.txt";
        CmdResult c = run_cli("invariant " + cycle + " -k 3 -o " + out_file.string());
        CHECK(c.status == 0);
        CHECK(c.out.empty());
        CHECK(slurp(out_file) == expect);
        std::filesystem::remove(out_file);
    }

    SECTION("tableau") {
        CmdResult r = run_cli("tableau " + cycle + " -k 2");
        CHECK(r.status == 0);
        CHECK(r.out == serialize_tableau(to_tableau(m, theory_of(m, 2))));
    }
}

TEST_CASE("tableau round trip through realize and check", "[cli]") {
    std::string path = data_path("path4.str");
    auto tab_file = scratch_dir() / "path4.tab";

    CmdResult enc = run_cli("tableau " + path + " -k 2 -o " + tab_file.string());
    REQUIRE(enc.status == 0);

    CmdResult dec = run_cli("realize " + tab_file.string() + " " + path);
    CHECK(dec.status == 0);
    CHECK(dec.out == read_data("path4.str"));

    CmdResult rep = run_cli("check " + tab_file.string() + " " + path);
    CHECK(rep.status == 0);
    CHECK(rep.out.find("all axioms pass\n") != std::string::npos);
    CHECK(count_lines_with(rep.out, "G") == 6);
    CHECK(rep.out.find("fail") == std::string::npos);

    CmdResult cap = run_cli("cap " + tab_file.string() + " " + path + " --max-size 4");
    CHECK(cap.status == 0);
    CHECK(cap.out.rfind("extension of size 4\n", 0) == 0);

    std::filesystem::remove(tab_file);
}

TEST_CASE("identity amalgamation reproduces the shared tableau", "[cli]") {
    std::string path = data_path("path4.str");
    auto tab_file = scratch_dir() / "amal.tab";
    REQUIRE(run_cli("tableau " + path + " -k 2 -o " + tab_file.string()).status == 0);
    std::string tab_text = slurp(tab_file);

    std::string spec = tab_file.string() + " " + tab_file.string() + " " + tab_file.string() +
                       " " + path;
    CmdResult r = run_cli("amalgamate " + spec);
    CHECK(r.status == 0);
    CHECK(r.out.rfind("size 4\n", 0) == 0);
    CHECK(count_lines_with(r.out, "g0 ") == 4);
    CHECK(count_lines_with(r.out, "g1 ") == 4);
    CHECK(r.out.find(tab_text) != std::string::npos);

    auto out_file = scratch_dir() / "amal_out.tab";
    CmdResult o = run_cli("amalgamate " + spec + " -o " + out_file.string());
    CHECK(o.status == 0);
    CHECK(slurp(out_file) == tab_text);
    std::filesystem::remove(tab_file);
    std::filesystem::remove(out_file);
}

TEST_CASE("ifp prints the stage chain of transitive closure", "[cli]") {
    CmdResult r = run_cli("ifp " + data_path("path4.str") +
                          " --formula \"(or (E x0 x1) (exists z (and (X x0 z) (E z x1))))\" -r 2");
    CHECK(r.status == 0);
    CHECK(r.out ==
          "stage 0 :\n"
          "stage 1 : (0,1) (1,2) (2,3)\n"
          "stage 2 : (0,1) (0,2) (1,2) (1,3) (2,3)\n"
          "stage 3 : (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)\n"
          "stage 4 : (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)\n"
          "stabilization-index 3\n");
}

TEST_CASE("run-program reports the frozen growth trace", "[cli]") {
    CmdResult r = run_cli("run-program " + data_path("edge_completion.prog") + " " +
                          data_path("cycle6.str") + " --start 0,1,2");
    CHECK(r.status == 0);
    CHECK(r.out ==
          "world 6\n"
          "initial 0 1 2\n"
          "chain 0 : 0 1 2\n"
          "step 0 sigma 1 pi 0|0100|0100 index 0 acted (1,2)\n"
          "  request (1,2) chosen (2,3) class 15 candidates 1\n"
          "chain 1 : 0 1 2 3\n"
          "step 1 sigma 1 pi 0|0100|0100 index 0 acted (2,3)\n"
          "  request (2,3) chosen (3,4) class 22 candidates 1\n"
          "chain 2 : 0 1 2 3 4\n"
          "step 2 sigma 1 pi 0|0100|0100 index 0 acted (3,4)\n"
          "  request (3,4) chosen (4,5) class 29 candidates 1\n"
          "chain 3 : 0 1 2 3 4 5\n"
          "stabilized true complete true stabilization-step 3\n");
}

TEST_CASE("cg exports parse back as dags with the pinned edge counts", "[cli]") {
    std::string args = data_path("edge_completion.prog") + " " + data_path("cycle6.str") +
                       " --start 0,1,2";

    CmdResult triv = run_cli("cg " + args);
    CHECK(triv.status == 0);
    NamedDag nd = parse_dag(triv.out);
    CHECK(static_cast<int>(nd.names.size()) == 86);
    CHECK(count_lines_with(triv.out, "edge ") == 88);
    CHECK(count_lines_with(triv.out, "label ") == 86);
    CHECK(nd.index.count("s0:0,0") == 1);
    CHECK(nd.index.count("s3:5,5") == 1);

    CmdResult cnt = run_cli("cg " + args +
                            " --split-closure --graph-closure counting --graph-ck 2");
    CHECK(cnt.status == 0);
    CHECK(count_lines_with(cnt.out, "edge ") == 159);

    CmdResult again = run_cli("cg " + args);
    CHECK(again.out == triv.out);
}

TEST_CASE("locsep and devmem verdicts agree with the library", "[cli]") {
    std::string args = data_path("edge_completion.prog") + " " + data_path("cycle6.str") +
                       " --start 0,1,2";

    CmdResult sep = run_cli("locsep " + args + " --a 2 --b 0 --c 0");
    CHECK(sep.status == 0);
    CHECK(sep.out == "locally separated\n");

    CmdResult nsep = run_cli("locsep " + args + " --a 0 --b 0");
    CHECK(nsep.status == 1);
    CHECK(nsep.out == "not locally separated\n");

    // The diagonal pair type over one parameter: its sole realization is the
    // parameter itself, which no base subset separates from d = {1}.
    FiniteStructure amb(Signature{{{"E", 2}}}, 3);
    amb.add_fact(0, {0, 1});
    amb.add_fact(0, {1, 2});
    int diag = refine_k_types(amb, 2).color_of(0, {1, 1});
    CmdResult mem = run_cli("devmem " + args + " --length 1 --params 1 --colors " +
                            std::to_string(diag) + " --d 1");
    CHECK(mem.status == 0);
    CHECK(mem.out == "member\n");

    int off = refine_k_types(amb, 3).color_of(0, {0, 1, 2});
    CmdResult non = run_cli("devmem " + args + " --length 1 --params 1,2 --colors " +
                            std::to_string(off) + " --d 1,2");
    CHECK(non.status == 1);
    CHECK(non.out == "not a member\n");
}

TEST_CASE("corpus generation is exhaustive, seeded, and deterministic", "[cli]") {
    auto dir = scratch_dir() / "corpus";
    std::filesystem::remove_all(dir);

    SECTION("all digraphs on two and three vertices") {
        CmdResult two = run_cli("corpus all-digraphs 2 --dir " + dir.string());
        CHECK(two.status == 0);
        CHECK(count_lines_with(two.out, dir.string()) == 4);

        FiniteStructure both = parse_structure(slurp(dir / "digraph_n2_3.str"));
        CHECK(both.facts[0].count({0, 1}) == 1);
        CHECK(both.facts[0].count({1, 0}) == 1);
        FiniteStructure none = parse_structure(slurp(dir / "digraph_n2_0.str"));
        CHECK(none.facts[0].empty());

        CmdResult three = run_cli("corpus all-digraphs 3 --dir " + dir.string());
        CHECK(three.status == 0);
        CHECK(count_lines_with(three.out, dir.string()) == 64);
        std::set<std::string> texts;
        for (int i = 0; i < 64; ++i) {
            std::ostringstream name;
            name << "digraph_n3_" << (i < 10 ? "0" : "") << i << ".str";
            texts.insert(slurp(dir / name.str()));
        }
        CHECK(texts.size() == 64);

        CmdResult big = run_cli("corpus all-digraphs 6 --dir " + dir.string());
        CHECK(big.status == 2);
    }

    SECTION("random corpus echoes its seed and repeats exactly") {
        CmdResult a = run_cli("corpus random 5 4 --seed 11 --dir " + dir.string());
        CHECK(a.status == 0);
        CHECK(a.out.rfind("seed 11\n", 0) == 0);
        std::vector<std::string> first;
        for (int i = 0; i < 4; ++i)
            first.push_back(slurp(dir / ("random_n5_s11_" + std::to_string(i) + ".str")));

        CmdResult b = run_cli("corpus random 5 4 --seed 11 --dir " + dir.string());
        CHECK(b.out == a.out);
        for (int i = 0; i < 4; ++i) {
            FiniteStructure m = parse_structure(first[i]);
            CHECK(m.size == 5);
            CHECK(slurp(dir / ("random_n5_s11_" + std::to_string(i) + ".str")) == first[i]);
        }

        CmdResult c = run_cli("corpus random 5 4 --seed 12 --dir " + dir.string());
        CHECK(c.out.rfind("seed 12\n", 0) == 0);
        CHECK(c.out != a.out);
    }

    std::filesystem::remove_all(dir);
}

TEST_CASE("usage and input failures exit with two", "[cli]") {
    CHECK(run_cli("bogus-subcommand").status == 2);
    CHECK(run_cli("equiv only-one.str -k 2").status == 2);
    CHECK(run_cli("equiv " + data_path("missing.str") + " " + data_path("cycle6.str") +
                  " -k 2")
              .status == 2);
    CHECK(run_cli("dsep " + data_path("collider.dag") + " --x nope --y b").status == 2);
    CHECK(run_cli("corpus random 40 2").status == 2);

    auto bad = scratch_dir() / "bad.str";
    std::ofstream(bad) << "rel E 2\nuniverse 3\nE 0 9\n";
    CHECK(run_cli("types " + bad.string() + " -k 2").status == 2);
    std::filesystem::remove(bad);

    CmdResult help = run_cli("--help");
    CHECK(help.status == 0);
    CHECK(help.out.find("equiv") != std::string::npos);
    CmdResult sub_help = run_cli("dsep --help");
    CHECK(sub_help.status == 0);
    CHECK(sub_help.out.find("--x") != std::string::npos);
}
