#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using calars::cli::run_cli;

namespace {

struct CliTest : ::testing::Test {
    fs::path dir;
    fs::path data;

    void SetUp() override
    {
        dir = fs::temp_directory_path() / ("calars_cli_" + std::to_string(::getpid()) + "_" +
                                           ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
        data = dir / "data.libsvm";
        const auto inst = calars::testkit::random_sparse_instance(40, 30, 0.3, 17);
        calars::RawDataset raw;
        raw.n_rows = 40;
        raw.n_cols = 30;
        raw.response = inst.b;
        for (calars::Index i = 0; i < 40; ++i)
            for (calars::Index j = 0; j < 30; ++j)
                if (inst.dense(i, j) != 0.0) raw.entries.push_back({i, j, inst.dense(i, j) * (1 + j)});
        std::ofstream out(data);
        calars::serialize_libsvm(raw, out);
    }
    void TearDown() override { fs::remove_all(dir); }

    int run(std::vector<std::string> args, std::string* err_text = nullptr)
    {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        if (err_text) *err_text = err.str();
        return code;
    }

    static std::string slurp(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
};

}  // namespace

TEST_F(CliTest, FitWritesArtifacts)
{
    const auto out = dir / "fit";
    ASSERT_EQ(run({"fit", "--algo", "blars", "--b", "2", "--P", "4", "--t", "10", "--data", data.string(), "--out",
                   out.string()}),
              0);
    for (const char* f : {"path.csv", "stats.json", "coefficients.csv", "manifest.json"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(manifest["schema_version"], 1);
    EXPECT_EQ(manifest["dataset"]["rows"], 40);
    EXPECT_EQ(manifest["dataset"]["sha256"], calars::cli::sha256_hex(slurp(data)));
    EXPECT_EQ(manifest["config"]["b"], 2);
    const auto stats = nlohmann::json::parse(slurp(out / "stats.json"));
    EXPECT_GT(stats["messages"].get<int>(), 0);
    EXPECT_TRUE(stats["phases"].contains("w_bcast"));
    EXPECT_TRUE(stats.contains("modeled_time"));
}

TEST_F(CliTest, TblarsWritesTournamentTrace)
{
    const auto out = dir / "tb";
    ASSERT_EQ(run({"fit", "--algo", "tblars", "--b", "2", "--P", "3", "--t", "6", "--seed", "5", "--data",
                   data.string(), "--out", out.string(), "--timing"}),
              0);
    const auto trace = nlohmann::json::parse(slurp(out / "tournament.json"));
    EXPECT_EQ(trace["plan"]["seed"], 5);
    EXPECT_FALSE(trace["rounds"].empty());
    EXPECT_TRUE(fs::exists(out / "timing.json"));
}

TEST_F(CliTest, RepeatedRunsAreBitwiseIdentical)
{
    for (const std::string algo : {"lars", "blars", "tblars"}) {
        const auto a = dir / (algo + "_a"), b = dir / (algo + "_b");
        for (const auto& out : {a, b})
            ASSERT_EQ(run({"fit", "--algo", algo, "--b", "2", "--P", "2", "--t", "8", "--data", data.string(), "--out",
                           out.string()}),
                      0);
        for (const auto& entry : fs::directory_iterator(a))
            EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << algo << " " << entry.path();
    }
}

TEST_F(CliTest, CompareAndHistogram)
{
    const auto out = dir / "cmp";
    ASSERT_EQ(run({"compare", "--algos", "blars,tblars", "--b", "1,2", "--P", "1,2", "--seeds", "1,2", "--t", "6",
                   "--data", data.string(), "--out", out.string()}),
              0);
    const auto precision = nlohmann::json::parse(slurp(out / "precision.json"));
    EXPECT_EQ(precision["blars/b=1/P=2/seed=none"]["precision"], 1.0);
    EXPECT_TRUE(precision.contains("tblars/b=2/P=2/seed=2"));
    EXPECT_NE(slurp(out / "residual_curves.csv").find("algo,b,P,n_selected,residual,seed"), std::string::npos);

    const auto h = dir / "hist";
    ASSERT_EQ(run({"histogram", "--data", data.string(), "--out", h.string(), "--bins", "8", "--P", "3"}), 0);
    const auto hist = nlohmann::json::parse(slurp(h / "histogram.json"));
    int total = 0;
    for (int c : hist["counts"]) total += c;
    EXPECT_EQ(total, 30);
    EXPECT_TRUE(fs::exists(h / "partition.json"));
}

TEST_F(CliTest, BadFlagsExitTwo)
{
    std::string err;
    EXPECT_EQ(run({"fit", "--algo", "blars", "--b", "0", "--data", data.string()}, &err), 2);
    EXPECT_NE(err.find("Usage"), std::string::npos);
    EXPECT_EQ(run({"fit", "--algo", "lasso", "--data", data.string()}), 2);
    EXPECT_EQ(run({"fit", "--b", "2"}), 2);  // --data missing
    EXPECT_EQ(run({}), 2);
    EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(CliTest, SolverAndDataErrorsExitOne)
{
    std::string err;
    EXPECT_EQ(run({"fit", "--data", (dir / "missing").string(), "--out", dir.string()}, &err), 1);
    EXPECT_NE(err.find("cannot open"), std::string::npos);
    EXPECT_EQ(run({"fit", "--t", "500", "--data", data.string(), "--out", dir.string()}, &err), 1);
    EXPECT_EQ(run({"fit", "--P", "41", "--t", "3", "--data", data.string(), "--out", dir.string()}, &err), 1);
}

TEST_F(CliTest, OutputDirectoryFromEnvironment)
{
    const auto out = dir / "env";
    ::setenv("CALARS_OUT_DIR", out.string().c_str(), 1);
    const int code = run({"fit", "--t", "3", "--data", data.string()});
    ::unsetenv("CALARS_OUT_DIR");
    EXPECT_EQ(code, 0);
    EXPECT_TRUE(fs::exists(out / "path.csv"));
}
