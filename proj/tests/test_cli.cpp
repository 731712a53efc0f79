#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "invdp/cli.hpp"

using namespace invdp;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("invdp_test_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

fs::path write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RunConfig tiny_config(const fs::path& out) {
    RunConfig c;
    c.seed = 11;
    c.workers = 2;
    c.output_dir = out.string();
    c.chain.n_stores = 2;
    c.chain.n_products = 1;
    c.chain.n_days = 120;
    c.chain.simulation.pilot_days = 600;
    return c;
}

int run_main(std::vector<std::string> args) {
    args.insert(args.begin(), "invdp");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST(Config, ParsesCommentsAndDefaults) {
    TempDir d("cfg");
    const auto p = write_file(d.path() / "c.json", R"({
      // comment
      "seed": 5, "chain": {"n_stores": 3}, "model": {"grids": {"k_max": 40}}
    })");
    auto c = load_config(p);
    EXPECT_EQ(c.seed, 5u);
    EXPECT_EQ(c.chain.n_stores, 3);
    EXPECT_EQ(c.model.grids.k_max, 40);
    finalize(c);
    EXPECT_EQ(c.hash.size(), 16u);
    EXPECT_EQ(c.chain.simulation.model.grids.k_max, 40);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
    TempDir d("cfg_bad");
    try {
        load_config(write_file(d.path() / "a.json", R"({"chain": {"n_stroes": 3}})"));
        FAIL() << "unknown key accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("chain.n_stroes"), std::string::npos);
    }
    try {
        load_config(write_file(d.path() / "b.json", R"({"seed": "seven"})"));
        FAIL() << "wrong type accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
    }
    EXPECT_THROW(load_config(write_file(d.path() / "c.json", "{ not json")), ConfigError);
    EXPECT_THROW(load_config(d.path() / "missing.json"), ConfigError);
}

TEST(Config, BadDiscountFactorFailsBeforeAnyOutput) {
    TempDir d("beta");
    const auto out = d.path() / "out";
    const auto p = write_file(d.path() / "c.json",
                              R"({"model": {"beta": 1.2}, "output_dir": ")" + out.generic_string() + "\"}");
    testing::internal::CaptureStderr();
    const int rc = run_main({"simulate", "--config", p.string()});
    const std::string err = testing::internal::GetCapturedStderr();
    EXPECT_EQ(rc, 1);
    EXPECT_NE(err.find("model.beta"), std::string::npos) << err;
    EXPECT_FALSE(fs::exists(out));
}

TEST(Config, HashTracksResultFieldsOnly) {
    auto a = tiny_config("x");
    auto b = tiny_config("y");
    b.workers = 7;
    finalize(a);
    finalize(b);
    EXPECT_EQ(a.hash, b.hash);
    auto c = tiny_config("x");
    c.seed = 12;
    finalize(c);
    EXPECT_NE(a.hash, c.hash);
}

TEST(Cli, ArgumentErrors) {
    testing::internal::CaptureStderr();
    testing::internal::CaptureStdout();
    EXPECT_EQ(run_main({"simulate"}), 1);
    EXPECT_EQ(run_main({"bogus", "--config", "x.json"}), 1);
    EXPECT_EQ(run_main({"--help"}), 0);
    testing::internal::GetCapturedStdout();
    testing::internal::GetCapturedStderr();
}

TEST(Cli, MissingInputIsAConfigErrorAndLeavesNoFiles) {
    TempDir d("missing");
    auto c = tiny_config(d.path() / "out");
    std::ostringstream err;
    EXPECT_EQ(cli::run("fit-demand", c, err), 1);
    EXPECT_NE(err.str().find("panels.csv"), std::string::npos);
    EXPECT_TRUE(!fs::exists(d.path() / "out") || fs::is_empty(d.path() / "out"));
}

TEST(Cli, NumericalFailureRemovesPartialOutputs) {
    TempDir d("numfail");
    const auto out = d.path() / "out";
    // A panel where nobody ever orders: the demand fit succeeds but the
    // probit has too few orders, so fit-ss fails as a whole.
    io::TableWriter t(io::panel_header());
    Rng rng = make_rng(3, {});
    int stock = 2000;
    for (int day = 0; day < 300; ++day) {
        PanelRow r;
        r.day = day;
        r.inventory = stock;
        r.weekend = day % 7 >= 5;
        r.price = day % 50 < 25 ? 20.0 : 23.0;
        r.holiday = day % 60 == 30;
        r.trailing7 = 5.0 + day % 11;
        r.demand = static_cast<int>(std::poisson_distribution<int>(r.weekend ? 3.0 : 1.5)(rng));
        r.sales = *r.demand;
        stock -= r.sales;
        t.add(io::panel_fields(r));
    }
    fs::create_directories(out);
    std::ofstream(out / "panels.csv") << t.str({});
    auto c = tiny_config(out);
    std::ostringstream err;
    EXPECT_EQ(cli::run("fit-demand", c, err), 0) << err.str();
    EXPECT_EQ(cli::run("fit-ss", c, err), 2) << err.str();
    EXPECT_FALSE(fs::exists(out / "ss_estimates.csv"));
    EXPECT_TRUE(fs::exists(out / "demand_estimates.csv"));
    // With skipping enabled the failure is recorded per unit instead.
    c.skip_failed_units = true;
    EXPECT_EQ(cli::run("fit-ss", c), 0);
    const auto ss = io::read_table(out / "ss_estimates.csv");
    ASSERT_EQ(ss.rows.size(), 1u);
    EXPECT_EQ(ss.rows[0][ss.column("status")].rfind("failed", 0), 0u);
}

TEST(Cli, SimulationAndDemandFitAreDeterministic) {
    TempDir d("det");
    for (const char* sub : {"a", "b"}) {
        auto c = tiny_config(d.path() / sub);
        c.workers = sub[0] == 'a' ? 1 : 3;
        ASSERT_EQ(cli::run("simulate", c), 0);
        ASSERT_EQ(cli::run("fit-demand", c), 0);
    }
    for (const char* f : {"panels.csv", "stores.csv", "managers.csv", "truth.csv", "demand_estimates.csv",
                          "fit-demand_diagnostics.json"})
        EXPECT_EQ(slurp(d.path() / "a" / f), slurp(d.path() / "b" / f)) << f;
    // Provenance header on every table.
    const auto text = slurp(d.path() / "a" / "panels.csv");
    EXPECT_EQ(text.rfind("# invdp simulate\n# config_hash=", 0), 0u);
    const auto panels = io::read_panels(d.path() / "a" / "panels.csv");
    EXPECT_EQ(panels.size(), 2u);
    EXPECT_EQ(panels.begin()->second.size(), 120u);
}

TEST(Cli, ReportQuantilesMatchSortedValues) {
    TempDir d("report");
    std::vector<std::string> h{"store_id", "product_id", "status"};
    for (const char* c : kCostNames) h.push_back(c);
    for (const char* c : kCostNames) h.push_back(std::string("t_") + c);
    h.push_back("ratio_total");
    io::TableWriter t(h);
    std::vector<double> f;
    for (int i = 0; i < 9; ++i) {
        const double v = std::pow(1.7, (i * 5) % 9);  // scrambled order
        std::vector<std::string> row{io::num(i), "0", i == 4 ? "failed: x" : "ok"};
        for (int j = 0; j < 9; ++j) row.push_back(io::num(j == 2 ? v : 1.0));
        if (i != 4) f.push_back(v);
        t.add(row);
    }
    std::ofstream(d.path() / "structural_estimates.csv") << t.str({"hand made"});
    auto c = tiny_config(d.path());
    ASSERT_EQ(cli::run("report", c), 0);
    std::sort(f.begin(), f.end());
    const auto s = io::read_table(d.path() / "report_summary.csv");
    for (const auto& r : s.rows) {
        if (r[0] != "gamma_f") continue;
        EXPECT_EQ(r[s.column("n")], "8");
        // n = 8: type-7 median interpolates halfway between the 4th and 5th values.
        EXPECT_DOUBLE_EQ(io::to_double(r[s.column("median")], "median"), 0.5 * (f[3] + f[4]));
        // p25: h = 0.25 * 7 = 1.75.
        EXPECT_NEAR(io::to_double(r[s.column("p25")], "p25"), f[1] + 0.75 * (f[2] - f[1]), 1e-12);
    }
    const auto cdf = io::read_table(d.path() / "report_cdf.csv");
    std::vector<double> got;
    for (const auto& r : cdf.rows)
        if (r[0] == "gamma_f") got.push_back(io::to_double(r[3], "value"));
    EXPECT_EQ(got, f);
}

TEST(Csv, NumbersRoundTripAndShapesAreChecked) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 12345678.901234567})
        EXPECT_EQ(io::to_double(io::num(v), "v"), v);
    EXPECT_THROW(io::to_double("1.5x", "v"), ConfigError);
    EXPECT_THROW(io::to_int("2.0", "v"), ConfigError);
    TempDir d("csv");
    write_file(d.path() / "t.csv", "# note\na,b\n1,2\n3\n");
    EXPECT_THROW(io::read_table(d.path() / "t.csv"), ConfigError);
    io::TableWriter w({"a", "b"});
    EXPECT_THROW(w.add({"1"}), DomainError);
}
