#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "orbitvae/dataset.hpp"
#include "orbitvae/families.hpp"
#include "support.hpp"

using namespace orbitvae;
namespace fs = std::filesystem;

#ifndef ORBITVAE_CLI
#error "ORBITVAE_CLI must name the command-line binary"
#endif

namespace {

struct CliResult {
    int status = -1;
    std::string out;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("orbitvae_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // stdout is captured, stderr goes to err.txt in the scratch directory.
    CliResult run(const std::string& args) const {
        const std::string cmd = "cd '" + dir_.string() + "' && '" ORBITVAE_CLI "' " + args + " 2>err.txt";
        CliResult r;
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (!pipe) return r;
        char buf[4096];
        std::size_t n;
        while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
        const int raw = ::pclose(pipe);
        r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
        return r;
    }

    std::string err() const { return slurp(dir_ / "err.txt"); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpListsSubcommands) {
    const CliResult r = run("--help");
    EXPECT_EQ(r.status, 0);
    for (const char* s : {"lagrange", "family", "ingest", "train", "generate", "refine", "check", "analyze", "plot"})
        EXPECT_NE(r.out.find(s), std::string::npos) << s;
    const CliResult sub = run("refine --help");
    EXPECT_EQ(sub.status, 0);
    EXPECT_NE(sub.out.find("--tol"), std::string::npos);
    EXPECT_NE(sub.out.find("1e-10"), std::string::npos) << "defaults are shown";
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("").status, 2);
    EXPECT_EQ(run("frobnicate").status, 2);
    EXPECT_EQ(run("refine --in a --params b --out c --report d --tol 0").status, 2);
    EXPECT_EQ(run("family --libration L4 --count 3 --out x.csv").status, 2);
    EXPECT_NE(err().find("L1 and L2"), std::string::npos) << err();
    EXPECT_EQ(run("plot --out a.svg").status, 2);
}

TEST_F(Cli, FormatErrorsExitThree) {
    EXPECT_EQ(run("ingest --catalog missing.csv --out t.orbt").status, 3);
    {
        std::ofstream(path("bad.csv")) << "not a catalog\n";
    }
    EXPECT_EQ(run("ingest --catalog bad.csv --out t.orbt").status, 3);
    EXPECT_NE(err().find("line 1"), std::string::npos) << err();
    {
        std::ofstream(path("junk.orbt")) << "{\"magic\":\"ORBT1\"}\n";
    }
    EXPECT_EQ(run("generate --model junk.orbt --out g.orbt").status, 3);
}

TEST_F(Cli, LagrangeMatchesLibrary) {
    const CliResult r = run("lagrange");
    ASSERT_EQ(r.status, 0);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "point,x,y,z");
    const auto pts = lagrange_points(MassRatio(kEarthMoonMu));
    for (int i = 0; i < 5; ++i) {
        ASSERT_TRUE(std::getline(in, line));
        EXPECT_EQ(line.substr(0, 3), "L" + std::to_string(i + 1) + ",");
        EXPECT_EQ(std::stod(line.substr(3)), pts[static_cast<std::size_t>(i)].position.x());
    }
}

TEST_F(Cli, FamilyMatchesLibrary) {
    ASSERT_EQ(run("family --libration L1 --count 5 --out f.csv").status, 0);
    const ContinuationResult r = continue_family(MassRatio(kEarthMoonMu), Libration::L1, 5);
    EXPECT_EQ(slurp(path("f.csv")), format_catalog(r.catalog));
}

TEST_F(Cli, PipelineIsDeterministic) {
    ASSERT_EQ(run("family --count 12 --out fam.csv").status, 0);
    ASSERT_EQ(run("ingest --catalog fam.csv --nodes 100 --out data.orbt").status, 0);
    const auto [tensor, params] = load_tensor(path("data.orbt"));
    EXPECT_EQ(tensor.num_orbits(), 24u);
    EXPECT_TRUE(tensor.normalized);

    const CliResult tr = run("train --data data.orbt --epochs 2 --batch-size 8 --out m.ovae");
    ASSERT_EQ(tr.status, 0) << err();
    EXPECT_EQ(tr.out.substr(0, tr.out.find('\n')), "epoch,total,recon,kl");
    EXPECT_EQ(std::count(tr.out.begin(), tr.out.end(), '\n'), 3);

    ASSERT_EQ(run("generate --model m.ovae --count 6 --seed 3 --out g1.orbt").status, 0);
    ASSERT_EQ(run("generate --model m.ovae --count 6 --seed 3 --out g2.orbt").status, 0);
    ASSERT_EQ(run("generate --model m.ovae --count 6 --seed 4 --out g3.orbt").status, 0);
    EXPECT_EQ(slurp(path("g1.orbt")), slurp(path("g2.orbt")));
    EXPECT_NE(slurp(path("g1.orbt")), slurp(path("g3.orbt")));

    const CliResult ref = run("refine --in g1.orbt --params data.orbt --out r.csv --report rep.csv --jobs 2");
    ASSERT_EQ(ref.status, 0) << err();
    EXPECT_NE(ref.out.find("of 6"), std::string::npos) << ref.out;
    const std::string rep = slurp(path("rep.csv"));
    EXPECT_EQ(rep.substr(0, rep.find('\n')), "orbit_index,converged,iterations,final_norm");
    EXPECT_EQ(std::count(rep.begin(), rep.end(), '\n'), 7);
    ASSERT_EQ(run("refine --in g1.orbt --params data.orbt --out r2.csv --report rep2.csv --jobs 1").status, 0);
    EXPECT_EQ(rep, slurp(path("rep2.csv")));

    const CliResult chk = run("check --in data.orbt --params data.orbt --out -");
    ASSERT_EQ(chk.status, 0) << err();
    EXPECT_EQ(chk.out.substr(0, chk.out.find('\n')), "orbit_index,mean_error,segments,failed_segments");

    ASSERT_EQ(run("analyze latent --model m.ovae --data data.orbt --catalog fam.csv --out z.csv --profile p.csv").status, 0)
        << err();
    const CliResult cl = run("analyze cluster --latent z.csv --k 2 --seed 1");
    ASSERT_EQ(cl.status, 0) << err();
    EXPECT_EQ(cl.out.substr(0, cl.out.find('\n')), "k,seed,nmi,accuracy");

    ASSERT_EQ(run("plot --latent z.csv --out z.svg").status, 0);
    ASSERT_EQ(run("plot --orbits fam.csv --out o.svg").status, 0);
    EXPECT_NE(slurp(path("z.svg")).find("<svg"), std::string::npos);
    EXPECT_NE(slurp(path("o.svg")).find("<svg"), std::string::npos);
}
