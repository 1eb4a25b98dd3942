#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "censorkit/data.hpp"

using namespace censorkit;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path((std::filesystem::temp_directory_path() / name).string()) {
        std::ofstream os(path);
        os << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

TabularSchema basic_schema() {
    TabularSchema sc;
    sc.label_column = "y";
    sc.sensitive_column = "sex";
    sc.positive_sensitive_value = "F";
    sc.categorical_columns = {"color"};
    sc.numeric_columns = {"age"};
    return sc;
}

}  // namespace

TEST_CASE("load_csv") {
    SECTION("one-hot encodes categoricals in first-appearance order") {
        TempFile f("ck_basic.csv",
                   "age,color,sex,y\n"
                   "10,red,F,1\n"
                   "20,blue,M,0\n"
                   "30,red,F,1\n");
        const Dataset ds = load_csv(f.path, basic_schema());
        CHECK(ds.rows() == 3);
        CHECK(ds.dim() == 3);  // color=red, color=blue, age
        CHECK(ds.feature_names == std::vector<std::string>{"color=red", "color=blue", "age"});
        CHECK(ds.x.at(0, 0) == 1.0);
        CHECK(ds.x.at(1, 1) == 1.0);
        CHECK(ds.x.at(1, 0) == 0.0);
        CHECK(ds.x.at(2, 2) == 30.0);
        CHECK(ds.s == std::vector<int8_t>{1, 0, 1});
        CHECK(ds.y == std::vector<int8_t>{1, 0, 1});
        CHECK(ds.standardize_cols == std::vector<std::size_t>{2});
    }

    SECTION("quoted fields with commas parse per convention") {
        TabularSchema sc;
        sc.label_column = "y";
        sc.sensitive_column = "s";
        sc.positive_sensitive_value = "a,b";
        sc.categorical_columns = {"note"};
        TempFile f("ck_quoted.csv",
                   "note,s,y\n"
                   "\"hello, world\",\"a,b\",1\n"
                   "\"say \"\"hi\"\"\",c,0\n");
        const Dataset ds = load_csv(f.path, sc);
        CHECK(ds.feature_names[0] == "note=hello, world");
        CHECK(ds.feature_names[1] == "note=say \"hi\"");
        CHECK(ds.s == std::vector<int8_t>{1, 0});
    }

    SECTION("empty label means unlabeled") {
        TempFile f("ck_unlabeled.csv",
                   "age,color,sex,y\n"
                   "10,red,F,\n"
                   "20,red,M,0\n");
        const Dataset ds = load_csv(f.path, basic_schema());
        CHECK(ds.y == std::vector<int8_t>{-1, 0});
    }

    SECTION("unknown column is rejected") {
        TempFile f("ck_unknown.csv", "age,sex,y\n1,F,0\n2,M,1\n");
        TabularSchema sc = basic_schema();  // wants 'color'
        CHECK_THROWS_AS(load_csv(f.path, sc), IngestionError);
    }

    SECTION("unparseable numeric names the row") {
        TempFile f("ck_badnum.csv",
                   "age,color,sex,y\n"
                   "10,red,F,1\n"
                   "oops,red,M,0\n");
        CHECK_THROWS_WITH(load_csv(f.path, basic_schema()),
                          Catch::Matchers::ContainsSubstring("row 3"));
    }

    SECTION("single observed sensitive group is rejected") {
        TempFile f("ck_onegroup.csv",
                   "age,color,sex,y\n"
                   "10,red,M,1\n"
                   "20,red,M,0\n");
        CHECK_THROWS_AS(load_csv(f.path, basic_schema()), IngestionError);
    }

    SECTION("bad label value is rejected") {
        TempFile f("ck_badlabel.csv", "age,color,sex,y\n10,red,F,yes\n20,red,M,0\n");
        CHECK_THROWS_AS(load_csv(f.path, basic_schema()), IngestionError);
    }

    SECTION("missing file is an ingestion error") {
        CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", basic_schema()), IngestionError);
    }
}

TEST_CASE("csv export round-trips exactly") {
    SynthTabularSpec spec;
    spec.n = 50;
    spec.d = 5;
    spec.seed = 3;
    spec.label_noise = 0.1;
    const Dataset ds = synth_tabular(spec);

    const std::string path =
        (std::filesystem::temp_directory_path() / "ck_roundtrip.csv").string();
    write_csv(path, ds);

    TabularSchema sc;
    sc.label_column = "y";
    sc.sensitive_column = "s";
    sc.positive_sensitive_value = "1";
    sc.numeric_columns = ds.feature_names;
    const Dataset back = load_csv(path, sc);
    std::remove(path.c_str());

    CHECK(back.x.shape == ds.x.shape);
    CHECK(back.x.data == ds.x.data);
    CHECK(back.y == ds.y);
    CHECK(back.s == ds.s);
}

TEST_CASE("split") {
    SynthTabularSpec spec;
    spec.n = 100;
    spec.d = 3;
    spec.seed = 9;
    const Dataset ds = synth_tabular(spec);

    SECTION("fractions give exact sizes and a disjoint exhaustive cover") {
        const Splits sp = split(ds, {0.8, 0.1, 0.1, 7});
        CHECK(sp.train.rows() == 80);
        CHECK(sp.valid.rows() == 10);
        CHECK(sp.test.rows() == 10);
    }

    SECTION("same seed, same split") {
        const Splits a = split(ds, {0.6, 0.2, 0.2, 42});
        const Splits b = split(ds, {0.6, 0.2, 0.2, 42});
        CHECK(a.train.x.data == b.train.x.data);
        CHECK(a.test.x.data == b.test.x.data);
    }

    SECTION("different seeds differ somewhere") {
        int differing = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const Splits a = split(ds, {0.6, 0.2, 0.2, seed});
            const Splits b = split(ds, {0.6, 0.2, 0.2, seed + 1000});
            if (a.train.x.data != b.train.x.data) ++differing;
        }
        CHECK(differing >= 99);
    }

    SECTION("bad fractions are rejected") {
        CHECK_THROWS_AS(split(ds, {0.8, 0.1, 0.2, 0}), ConfigError);
        CHECK_THROWS_AS(split(ds, {1.0, -0.1, 0.1, 0}), ConfigError);
    }

    SECTION("empty part is rejected") {
        SynthTabularSpec tiny;
        tiny.n = 4;
        tiny.d = 2;
        const Dataset small = synth_tabular(tiny);
        CHECK_THROWS_AS(split(small, {0.9, 0.05, 0.05, 0}), ConfigError);
    }
}

TEST_CASE("standardization uses training statistics only") {
    TempFile f("ck_std.csv",
               "age,color,sex,y\n"
               "10,red,F,1\n10,red,M,0\n10,red,F,1\n10,red,M,0\n"
               "10,red,F,1\n10,red,M,0\n10,red,F,1\n10,red,M,0\n"
               "50,red,F,1\n90,red,M,0\n");
    const Dataset ds = load_csv(f.path, basic_schema());
    // color has a single level here, so age sits at feature index 1
    const std::size_t age_col = static_cast<std::size_t>(
        std::find(ds.feature_names.begin(), ds.feature_names.end(), "age") -
        ds.feature_names.begin());
    REQUIRE(age_col < ds.dim());
    const Splits sp = split(ds, {0.8, 0.1, 0.1, 1});
    double train_mean = 0.0;
    for (std::size_t i = 0; i < sp.train.rows(); ++i)
        train_mean += sp.train.x.at(i, age_col);
    CHECK(std::fabs(train_mean) < 1e-9);  // standardized train column has mean ~0

    SECTION("constant training column standardizes to zeros with unit divisor") {
        TempFile g("ck_const.csv",
                   "age,color,sex,y\n"
                   "7,red,F,1\n7,red,M,0\n7,red,F,1\n7,red,M,0\n"
                   "7,red,F,1\n7,red,M,0\n7,red,F,1\n7,red,M,0\n"
                   "7,red,F,1\n9,red,M,0\n");
        const Dataset cds = load_csv(g.path, basic_schema());
        const std::size_t col = static_cast<std::size_t>(
            std::find(cds.feature_names.begin(), cds.feature_names.end(), "age") -
            cds.feature_names.begin());
        // find a seed that puts the odd row (age 9) outside the training split
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const Splits raw = split(cds, {0.8, 0.1, 0.1, seed});
            bool train_constant = true;
            for (std::size_t i = 0; i < raw.train.rows(); ++i)
                if (raw.train.x.at(i, col) != raw.train.x.at(0, col))
                    train_constant = false;
            if (!train_constant) continue;
            for (std::size_t i = 0; i < raw.train.rows(); ++i)
                CHECK(raw.train.x.at(i, col) == 0.0);
            return;
        }
        FAIL("no seed kept the constant column intact in train");
    }
}

TEST_CASE("synth_tabular") {
    SECTION("fixed seed reproduces the dataset") {
        SynthTabularSpec spec;
        spec.n = 64;
        spec.d = 6;
        spec.seed = 12;
        const Dataset a = synth_tabular(spec);
        const Dataset b = synth_tabular(spec);
        CHECK(a.x.data == b.x.data);
        CHECK(a.y == b.y);
        CHECK(a.s == b.s);
    }

    SECTION("label base rate stays near one half across seeds") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            SynthTabularSpec spec;
            spec.n = 400;
            spec.d = 8;
            spec.label_noise = 0.1;
            spec.seed = seed;
            const Dataset ds = synth_tabular(spec);
            double rate = 0.0;
            for (auto v : ds.y) rate += v;
            rate /= static_cast<double>(ds.rows());
            CHECK(rate >= 0.35);
            CHECK(rate <= 0.65);
        }
    }

    SECTION("sensitive effect shifts only the affected features") {
        SynthTabularSpec spec;
        spec.n = 4000;
        spec.d = 10;
        spec.sensitive_effect = 2.0;
        spec.affected_fraction = 0.5;
        spec.seed = 5;
        const Dataset ds = synth_tabular(spec);
        // group means: affected columns differ by ~2, others by ~0
        std::vector<double> mean0(10, 0.0), mean1(10, 0.0);
        double n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            (ds.s[i] == 1 ? n1 : n0) += 1.0;
            for (std::size_t j = 0; j < 10; ++j)
                (ds.s[i] == 1 ? mean1[j] : mean0[j]) += ds.x.at(i, j);
        }
        for (std::size_t j = 0; j < 10; ++j) {
            const double gap = mean1[j] / n1 - mean0[j] / n0;
            if (j < 5) CHECK(gap == Catch::Approx(2.0).margin(0.2));
            else CHECK(gap == Catch::Approx(0.0).margin(0.2));
        }
    }

    SECTION("zero effect leaves groups indistinguishable on average") {
        // crude two-sample mean check in place of a full KS test
        int rejections = 0;
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            SynthTabularSpec spec;
            spec.n = 500;
            spec.d = 4;
            spec.sensitive_effect = 0.0;
            spec.seed = seed;
            const Dataset ds = synth_tabular(spec);
            for (std::size_t j = 0; j < 4; ++j) {
                double m0 = 0, m1 = 0, n0 = 0, n1 = 0;
                for (std::size_t i = 0; i < ds.rows(); ++i) {
                    if (ds.s[i] == 1) {
                        m1 += ds.x.at(i, j);
                        n1 += 1;
                    } else {
                        m0 += ds.x.at(i, j);
                        n0 += 1;
                    }
                }
                const double gap = m1 / n1 - m0 / n0;
                const double se = std::sqrt(1.0 / n0 + 1.0 / n1);
                if (std::fabs(gap) > 3.5 * se) ++rejections;
            }
        }
        CHECK(rejections <= 2);  // 160 tests at ~0.05% each
    }

    SECTION("invalid specs are rejected") {
        SynthTabularSpec bad;
        bad.n = 2;
        CHECK_THROWS_AS(synth_tabular(bad), ConfigError);
        bad = SynthTabularSpec{};
        bad.label_noise = 0.7;
        CHECK_THROWS_AS(synth_tabular(bad), ConfigError);
        bad = SynthTabularSpec{};
        bad.affected_fraction = 1.5;
        CHECK_THROWS_AS(synth_tabular(bad), ConfigError);
    }
}

TEST_CASE("adult-shaped file reports the expected feature dimension") {
    // 6 numeric columns plus categoricals whose level counts sum to 96
    std::string header = "n0,n1,n2,n3,n4,n5";
    std::vector<int> level_counts = {30, 20, 16, 10, 8, 6, 4, 2};
    for (std::size_t c = 0; c < level_counts.size(); ++c)
        header += ",c" + std::to_string(c);
    header += ",sex,y\n";

    std::string body;
    Rng rng(77);
    for (int r = 0; r < 120; ++r) {
        std::string line;
        for (int j = 0; j < 6; ++j) line += std::to_string(r * 7 + j) + ",";
        for (std::size_t c = 0; c < level_counts.size(); ++c) {
            // first rows sweep every level so all levels appear
            const int level = r < level_counts[c]
                                  ? r
                                  : static_cast<int>(rng.uniform_index(level_counts[c]));
            line += "v" + std::to_string(level) + ",";
        }
        line += (r % 2 == 0 ? "Male" : "Female");
        line += r % 3 == 0 ? ",1\n" : ",0\n";
        body += line;
    }
    TempFile f("ck_adultish.csv", header + body);

    TabularSchema sc;
    sc.label_column = "y";
    sc.sensitive_column = "sex";
    sc.positive_sensitive_value = "Female";
    for (int j = 0; j < 6; ++j) sc.numeric_columns.push_back("n" + std::to_string(j));
    for (std::size_t c = 0; c < level_counts.size(); ++c)
        sc.categorical_columns.push_back("c" + std::to_string(c));

    const Dataset ds = load_csv(f.path, sc);
    CHECK(ds.dim() == 102);
}
