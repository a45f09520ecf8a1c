#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tfde/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun run(std::vector<std::string> args)
{
    args.insert(args.begin(), "tfde");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = tfde::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch_dir()
{
    const fs::path d = fs::temp_directory_path() /
                       ("tfde_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

TEST(ConfigText, ParsesKeysAndComments)
{
    const auto cfg = tfde::parse_config_text("# header\n"
                                             "experiment = table2\n"
                                             "alpha = 0.3   # trailing\n"
                                             "\n"
                                             "n-min = 10\n"
                                             "n_max=40\n"
                                             "format = markdown\n");
    EXPECT_EQ(cfg.experiment, tfde::Experiment::Table2);
    EXPECT_DOUBLE_EQ(*cfg.alpha, 0.3);
    EXPECT_EQ(*cfg.n_min, 10u);
    EXPECT_EQ(*cfg.n_max, 40u);
    EXPECT_EQ(cfg.format, tfde::OutputFormat::Markdown);
    const auto rc = tfde::resolve(cfg);
    EXPECT_EQ(rc.ns, (std::vector<std::size_t>{10, 20, 40}));
    EXPECT_DOUBLE_EQ(rc.grading, 3.0);
    EXPECT_DOUBLE_EQ(rc.delta_reg, 1.8);
}

TEST(ConfigText, RangeErrorNamesRule)
{
    try {
        tfde::parse_config_text("alpha = 1.5\n", "run.cfg");
        FAIL() << "no throw";
    } catch (const tfde::InvalidParameter& e) {
        EXPECT_NE(std::string(e.what()).find("run.cfg:1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("alpha=1.5 violates 0 < alpha < 1"), std::string::npos);
    }
}

TEST(ConfigText, UnknownKeyNamesLine)
{
    try {
        tfde::parse_config_text("alpha = 0.5\n# c\ncolour = blue\n", "run.cfg");
        FAIL() << "no throw";
    } catch (const tfde::InvalidParameter& e) {
        EXPECT_NE(std::string(e.what()).find("run.cfg:3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
    }
}

TEST(ConfigText, MalformedAndBadNumbers)
{
    EXPECT_THROW(tfde::parse_config_text("alpha 0.5\n"), tfde::InvalidParameter);
    EXPECT_THROW(tfde::parse_config_text("N = 3.5\n"), tfde::InvalidParameter);
    EXPECT_THROW(tfde::parse_config_text("epsilon = abc\n"), tfde::InvalidParameter);
    EXPECT_THROW(tfde::parse_config_text("M = 1\n"), tfde::InvalidParameter);
    EXPECT_THROW(tfde::parse_config_text("delta = 2\n"), tfde::InvalidParameter);
    EXPECT_THROW(tfde::parse_config_text("experiment = table3\n"), tfde::InvalidParameter);
}

TEST(Resolve, Defaults)
{
    tfde::RunConfig cfg;
    EXPECT_THROW(tfde::resolve(cfg), tfde::InvalidParameter);
    cfg.experiment = tfde::Experiment::Table1;
    auto rc = tfde::resolve(cfg);
    EXPECT_EQ(rc.alphas, (std::vector<double>{0.1, 0.3, 0.5}));
    EXPECT_EQ(rc.ns, (std::vector<std::size_t>{80, 160, 320, 640}));
    EXPECT_DOUBLE_EQ(rc.epsilon, 1e-12);
    EXPECT_DOUBLE_EQ(rc.grading, 1.5);
    cfg.experiment = tfde::Experiment::Stability;
    rc = tfde::resolve(cfg);
    EXPECT_EQ(rc.n_steps, 64u);
    EXPECT_EQ(rc.alphas, (std::vector<double>{0.5}));
    cfg.experiment = tfde::Experiment::Table2;
    cfg.n_min = 10;
    cfg.n_max = 30;
    EXPECT_THROW(tfde::resolve(cfg), tfde::InvalidParameter);
}

TEST(Cli, NoArgumentsPrintsUsage)
{
    const CliRun r = run({});
    EXPECT_EQ(r.code, tfde::kExitValidation);
    EXPECT_NE(r.err.find("usage"), std::string::npos);
}

TEST(Cli, ValidationFailures)
{
    EXPECT_EQ(run({"table1", "--alpha", "1.5"}).code, tfde::kExitValidation);
    EXPECT_EQ(run({"table9"}).code, tfde::kExitValidation);
    EXPECT_EQ(run({"solve", "--bogus", "1"}).code, tfde::kExitValidation);
    EXPECT_EQ(run({"solve", "--config", "/nonexistent/run.cfg"}).code, tfde::kExitValidation);
    EXPECT_EQ(run({"table1", "--format", "binary", "--n-min", "10", "--n-max", "10"}).code,
              tfde::kExitValidation);
}

TEST(Cli, FlagOverridesConfigFile)
{
    const fs::path dir = scratch_dir();
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "experiment = soe-check\nalpha = 0.3\nepsilon = 1e-6\nsamples = 200\nN = 20\n";
    }
    const CliRun from_file = run({"--config", (dir / "run.cfg").string()});
    ASSERT_EQ(from_file.code, 0) << from_file.err;
    EXPECT_NE(from_file.err.find("alpha=0.3"), std::string::npos);
    const CliRun flagged = run({"--config", (dir / "run.cfg").string(), "--alpha", "0.7"});
    ASSERT_EQ(flagged.code, 0) << flagged.err;
    EXPECT_NE(flagged.err.find("alpha=0.7"), std::string::npos);
    EXPECT_EQ(flagged.out.rfind("# alpha=0.7", 0), 0u);
    fs::remove_all(dir);
}

TEST(Cli, NumericalFailureExitsTwo)
{
    const CliRun r = run({"soe-check", "--epsilon", "1e-30", "--delta-cut", "1e-3"});
    EXPECT_EQ(r.code, tfde::kExitNumerical);
    EXPECT_NE(r.err.find("numerical failure"), std::string::npos);
}

TEST(Cli, SoeCheckOutputReadsBack)
{
    const CliRun r = run({"soe-check", "--alpha", "0.4", "--epsilon", "1e-8", "--N", "20",
                       "--samples", "500"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    const auto soe = tfde::read_soe_csv<double>(in);
    EXPECT_DOUBLE_EQ(soe.alpha, 0.4);
    EXPECT_GT(soe.n_exp(), 10u);
    EXPECT_LE(tfde::verify_soe(soe, 200), 1e-8);
}

TEST(Cli, ZeroProblemWritesZeros)
{
    const CliRun r = run({"solve", "--problem", "zero", "--N", "8", "--M", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    const auto m = tfde::read_solution_csv(in);
    EXPECT_EQ(m.rows, 5u);
    EXPECT_EQ(m.cols, 9u);
    for (double v : m.data) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Cli, SolveIsDeterministicAndFormatsAgree)
{
    const fs::path dir = scratch_dir();
    const auto out = [&](const char* name) { return (dir / name).string(); };
    const std::vector<std::string> base{"solve", "--alpha", "0.3", "--N", "16", "--M", "8",
                                        "--epsilon", "1e-9"};
    auto with = [&](std::vector<std::string> extra) {
        auto a = base;
        a.insert(a.end(), extra.begin(), extra.end());
        return a;
    };
    ASSERT_EQ(run(with({"--format", "binary", "--output", out("a.bin")})).code, 0);
    ASSERT_EQ(run(with({"--format", "binary", "--output", out("b.bin")})).code, 0);
    ASSERT_EQ(run(with({"--output", out("a.csv")})).code, 0);
    EXPECT_EQ(slurp(out("a.bin")), slurp(out("b.bin")));
    EXPECT_FALSE(fs::exists(out("a.bin") + ".tmp"));

    std::ifstream bin(out("a.bin"), std::ios::binary);
    std::ifstream csv(out("a.csv"));
    const auto mb = tfde::read_solution_binary(bin);
    const auto mc = tfde::read_solution_csv(csv);
    ASSERT_EQ(mb.rows, 9u);
    ASSERT_EQ(mb.cols, 17u);
    ASSERT_EQ(mc.rows, mb.rows);
    ASSERT_EQ(mc.cols, mb.cols);
    for (std::size_t k = 0; k < mb.data.size(); ++k) {
        EXPECT_EQ(mb.data[k], mc.data[k]);
    }
    EXPECT_NEAR(mb.at(4, 0), 0.0625, 1e-15);
    fs::remove_all(dir);
}

TEST(Cli, UnwritableOutputExitsOne)
{
    const CliRun r = run({"solve", "--problem", "zero", "--N", "4", "--M", "2", "--output",
                       "/nonexistent-dir/out.csv"});
    EXPECT_EQ(r.code, tfde::kExitValidation);
}

TEST(Cli, AtomicWriteReplacesWholeFile)
{
    const fs::path dir = scratch_dir();
    const std::string p = (dir / "f.txt").string();
    tfde::write_atomically(p, std::string(1000, 'a'));
    tfde::write_atomically(p, "short");
    EXPECT_EQ(slurp(p), "short");
    EXPECT_FALSE(fs::exists(p + ".tmp"));
    fs::remove_all(dir);
}

TEST(Cli, DerivTableJsonl)
{
    const CliRun r = run({"deriv-table", "--alpha", "0.5", "--n-min", "20", "--n-max", "40",
                       "--format", "jsonl", "--seed", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(in, line)) {
        rows.push_back(nlohmann::json::parse(line));
    }
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0]["experiment"], "example1");
    EXPECT_EQ(rows[1]["N"].get<int>(), 40);
    EXPECT_EQ(rows[1]["seed"].get<int>(), 7);
    EXPECT_GT(rows[1]["order"].get<double>(), 1.0);
}

TEST(Cli, MultiAlphaCsvHasAlphaColumn)
{
    const CliRun r = run({"table2", "--n-min", "10", "--n-max", "20", "--problem", "zero"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "alpha,N,error,order");
    std::size_t count = 0;
    while (std::getline(in, line)) {
        ++count;
    }
    EXPECT_EQ(count, 6u);
}

} // namespace
