#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "climeco/stats.hpp"
#include "climeco/table.hpp"

#include <cstdio>
#include <filesystem>
#include <random>

using namespace climeco;

TEST_CASE("normal quantile inverts the normal cdf") {
    for (double p : {1e-8, 0.001, 0.025, 0.1, 0.5, 0.9, 0.975, 0.999, 1.0 - 1e-8}) {
        const double x = normal_quantile(p);
        CHECK(normal_cdf(x) == doctest::Approx(p).epsilon(1e-10));
    }
    CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
}

TEST_CASE("student t cdf matches known values") {
    // symmetric, and t(inf) ~ normal
    CHECK(student_t_cdf(0.0, 5.0) == doctest::Approx(0.5));
    CHECK(student_t_cdf(2.0, 10.0) + student_t_cdf(-2.0, 10.0) == doctest::Approx(1.0));
    // two-sided p for t = 2.228, dof 10 is 0.05 (classic table value)
    CHECK(student_t_two_sided_p(2.228, 10.0) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(student_t_cdf(1.96, 1e7) == doctest::Approx(normal_cdf(1.96)).epsilon(1e-5));
}

TEST_CASE("quantile interpolates linearly") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 4.0);
    CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
    CHECK(quantile(v, 1.0 / 3.0) == doctest::Approx(2.0));
}

TEST_CASE("weighted median walks cumulative weight") {
    std::vector<double> values{1.0, 2.0, 3.0};
    std::vector<double> weights{1.0, 1.0, 10.0};
    CHECK(weighted_median(values, weights) == 3.0);
    std::vector<double> equal{5.0, 5.0, 5.0};
    CHECK(weighted_median(equal, weights) == 5.0);
    std::vector<double> w2{1.0, 1.0, 1.0};
    CHECK(weighted_median(values, w2) == 2.0);
}

TEST_CASE("midranks average ties") {
    std::vector<double> v{10.0, 20.0, 20.0, 30.0};
    const auto r = midranks(v);
    CHECK(r[0] == 1.0);
    CHECK(r[1] == doctest::Approx(2.5));
    CHECK(r[2] == doctest::Approx(2.5));
    CHECK(r[3] == 4.0);
}

TEST_CASE("table csv round trip preserves values and types") {
    DataTable t;
    auto& id = t.add_string("region_id");
    auto& year = t.add_numeric("year");
    auto& value = t.add_numeric("x");
    t.resize_rows(3);
    id = {"a", "b,with comma", "c"};
    year = {1990, 1991, 1992};
    value = {0.1, kMissing, -1.5e-7};

    const std::string path = std::filesystem::temp_directory_path() / "climeco_core_test.csv";
    t.write_csv(path);
    const DataTable back = DataTable::read_csv(path);
    REQUIRE(back.n_rows() == 3);
    CHECK(back.strings("region_id")[1] == "b,with comma");
    CHECK(back.numeric("year")[2] == 1992);
    CHECK(back.numeric("x")[0] == 0.1);
    CHECK(is_missing(back.numeric("x")[1]));
    CHECK(back.numeric("x")[2] == -1.5e-7);
    std::filesystem::remove(path);
}

TEST_CASE("factor codes are sorted and row-order independent") {
    DataTable t;
    auto& c = t.add_string("c");
    t.resize_rows(4);
    c = {"z", "a", "z", "m"};
    const auto f = t.factor("c");
    CHECK(f.n_levels() == 3);
    CHECK(f.levels == std::vector<std::string>{"a", "m", "z"});
    CHECK(f.codes == std::vector<std::int32_t>{2, 0, 2, 1});

    DataTable numeric;
    auto& y = numeric.add_numeric("year");
    numeric.resize_rows(3);
    y = {2000, 1990, 2000};
    const auto fy = numeric.factor("year");
    CHECK(fy.levels == std::vector<std::string>{"1990", "2000"});
    CHECK(fy.codes == std::vector<std::int32_t>{1, 0, 1});
}

TEST_CASE("sort_by orders rows and select_rows subsets") {
    DataTable t;
    auto& id = t.add_string("region_id");
    auto& year = t.add_numeric("year");
    t.resize_rows(4);
    id = {"b", "a", "b", "a"};
    year = {1991, 1992, 1990, 1991};
    t.sort_by({"region_id", "year"});
    CHECK(t.strings("region_id") == std::vector<std::string>{"a", "a", "b", "b"});
    CHECK(t.numeric("year") == std::vector<double>{1991, 1992, 1990, 1991});

    const std::vector<std::size_t> rows{0, 2};
    const DataTable sub = t.select_rows(rows);
    CHECK(sub.n_rows() == 2);
    CHECK(sub.strings("region_id")[1] == "b");
}

TEST_CASE("content hash is sensitive to values") {
    DataTable a;
    a.add_numeric("x");
    a.resize_rows(1);
    a.numeric("x")[0] = 1.0;
    DataTable b;
    b.add_numeric("x");
    b.resize_rows(1);
    b.numeric("x")[0] = 2.0;
    CHECK(a.content_hash() != b.content_hash());
}
