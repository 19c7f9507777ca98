#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "vlcuav/deployment.hpp"

using namespace vlcuav;
using Catch::Approx;

namespace {

CellProblem uniform_problem(std::vector<Point2> positions, double coeff)
{
    CellProblem p;
    for (auto pos : positions)
        p.users.push_back({pos, 0.1, 0.0, coeff});
    return p;
}

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool inside_hull(std::vector<Point2> pts, Point2 q, double tol)
{
    std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    std::vector<Point2> hull;
    for (int pass = 0; pass < 2; ++pass) {
        const auto start = hull.size();
        for (const auto& p : pts) {
            while (hull.size() >= start + 2 && cross(hull[hull.size() - 2], hull.back(), p) <= 0)
                hull.pop_back();
            hull.push_back(p);
        }
        hull.pop_back();
        std::reverse(pts.begin(), pts.end());
    }
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto a = hull[i], b = hull[(i + 1) % hull.size()];
        if (cross(a, b, q) < -tol * std::hypot(b.x - a.x, b.y - a.y))
            return false;
    }
    return true;
}

} // namespace

TEST_CASE("coefficients follow the binding requirement", "[deployment]")
{
    const ChannelParams p;
    const double l = 2.0 * std::numbers::pi / (1.0 * 2.0 * 1e-4 * 3.0 * 100.0);
    const double rate_factor = std::sqrt(2.0 * std::numbers::pi / std::numbers::e * (std::pow(2.0, 0.2) - 1.0));

    // Dark user: the illumination shortfall binds.
    CHECK(user_coefficient(0.1, 0.0, p) == Approx(std::sqrt(l * 3e-7)).epsilon(1e-13));
    // Bright user (negative shortfall): the rate term binds.
    CHECK(illumination_shortfall(1e-6, p) < 0.0);
    CHECK(user_coefficient(0.1, 1e-6, p) == Approx(std::sqrt(l * 1.1e-6 * rate_factor)).epsilon(1e-13));
    CHECK(path_loss_factor(p) == Approx(l).epsilon(1e-14));
    CHECK(rate_term(0.1, 1e-6, p) == Approx(1.1e-6 * rate_factor).epsilon(1e-13));

    const std::vector<UserDemand> users{{{1, 2}, 0.1}, {{3, 4}, 0.2}};
    const std::vector<double> ambient{0.0, 1e-6};
    const auto problem = build_cell_problem(users, ambient, p);
    REQUIRE(problem.users.size() == 2);
    CHECK(problem.users[1].coeff == user_coefficient(0.2, 1e-6, p));
    CHECK(problem.constraint_exponent() == Approx(0.5));

    const GmmFrame field{1e-6, {{1.0, 3, 4, 1, 1}}};
    const auto from_field = build_cell_problem(users, field, p);
    CHECK(from_field.users[1].ambient == Approx(1e-6));
    CHECK(from_field.users[0].ambient == Approx(1e-6 * std::exp(-4.0)));
}

TEST_CASE("cell problem errors", "[deployment]")
{
    const ChannelParams p;
    const std::vector<UserDemand> none;
    const std::vector<double> empty;
    CHECK_THROWS_AS(build_cell_problem(none, empty, p), Error);
    const std::vector<UserDemand> one{{{0, 0}, 0.1}};
    const std::vector<double> two{0.0, 0.0};
    CHECK_THROWS_AS(build_cell_problem(one, two, p), Error);
    const std::vector<UserDemand> zero_rate{{{0, 0}, 0.0}};
    const std::vector<double> amb{0.0};
    CHECK_THROWS_AS(build_cell_problem(zero_rate, amb, p), Error);
    CHECK_THROWS_AS(solve_cell(CellProblem{}), Error);
}

TEST_CASE("single user is served from directly above", "[deployment]")
{
    const auto problem = oracle::random_cell(3, 1);
    const auto s = solve_cell(problem);
    CHECK(s.position == problem.users[0].position);
    const double a = problem.users[0].coeff;
    CHECK(s.power == Approx(std::pow(a * 100.0, 2.0)).epsilon(1e-12));
    CHECK(s.converged);
}

TEST_CASE("equal-coefficient pair meets at the midpoint", "[deployment]")
{
    const auto s = solve_cell(uniform_problem({{0, 0}, {10, 0}}, 5e-3));
    CHECK(s.position.x == Approx(5.0).margin(1e-9));
    CHECK(s.position.y == Approx(0.0).margin(1e-9));
    CHECK(s.power == Approx(std::pow(5e-3 * 125.0, 2.0)).epsilon(1e-9));
}

TEST_CASE("rate-limited pair leans toward the brighter user", "[deployment]")
{
    const ChannelParams p;
    const std::vector<UserDemand> users{{{0, 0}, 0.1}, {{10, 0}, 0.1}};
    const std::vector<double> even{6e-7, 6e-7};
    const std::vector<double> skewed{6e-7, 1.2e-6};
    const auto base = solve_cell(build_cell_problem(users, even, p));
    const auto lit = solve_cell(build_cell_problem(users, skewed, p));
    CHECK(base.position.x == Approx(5.0).margin(1e-9));
    CHECK(lit.position.x > base.position.x + 0.1);
}

TEST_CASE("illumination-limited pair leans toward the darker user", "[deployment]")
{
    const ChannelParams p;
    const std::vector<UserDemand> users{{{0, 0}, 0.1}, {{10, 0}, 0.1}};
    const std::vector<double> skewed{0.0, 1e-7};
    const auto s = solve_cell(build_cell_problem(users, skewed, p));
    CHECK(s.position.x < 5.0 - 0.1);
}

TEST_CASE("dual ascent matches the exact minimax optimum", "[deployment]")
{
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const std::size_t n = 2 + seed % 9;
        const auto problem = oracle::random_cell(seed, n);
        const auto s = solve_cell(problem);
        const auto exact = oracle::exact_minimax(problem);
        const double exact_power = std::pow(exact.binding, 1.0 / problem.constraint_exponent());
        INFO("seed " << seed << " users " << n);
        CHECK(s.converged);
        CHECK(std::abs(s.power - exact_power) <= 1e-6 * exact_power);
        CHECK(distance(s.position, exact.position) < 1e-3);
        CHECK(s.power >= exact_power * (1 - 1e-12));
        CHECK(complementary_slackness(s) < 1e-6);
        CHECK(*std::max_element(s.slack.begin(), s.slack.end()) <= 1e-12);
    }
}

TEST_CASE("dual ascent agrees with the grid oracle", "[deployment]")
{
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        const auto problem = oracle::random_cell(seed, 8);
        const auto s = solve_cell(problem);
        const auto grid = brute_force_cell(problem, 0.02);
        INFO("seed " << seed);
        CHECK(std::abs(s.power - grid.power) <= 5e-3 * grid.power);
        CHECK(distance(s.position, grid.position) < 0.1);
        CHECK(s.power <= grid.power * (1 + 1e-9));
    }
    CHECK_THROWS_AS(brute_force_cell(oracle::random_cell(1, 3), 0.0), Error);
}

TEST_CASE("placement lies in the convex hull of the users", "[deployment]")
{
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
        const auto problem = oracle::random_cell(seed, 3 + seed % 6);
        const auto s = solve_cell(problem);
        std::vector<Point2> pts;
        for (const auto& u : problem.users)
            pts.push_back(u.position);
        CHECK(inside_hull(pts, s.position, 1e-9));
    }
}

TEST_CASE("halving the initial step leaves the optimum unchanged", "[deployment]")
{
    for (std::uint64_t seed = 300; seed < 305; ++seed) {
        const auto problem = oracle::random_cell(seed, 7);
        const auto a = solve_cell(problem);
        SolverConfig half;
        half.step /= 2.0;
        const auto b = solve_cell(problem, half);
        CHECK(b.power == Approx(a.power).epsilon(1e-6));
        CHECK(distance(a.position, b.position) < 1e-3);
    }
}

TEST_CASE("more light lowers the power while illumination binds", "[deployment]")
{
    const ChannelParams p;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> coord(0.0, 10.0), rate(0.05, 0.15);
    std::vector<UserDemand> users;
    for (int j = 0; j < 6; ++j)
        users.push_back({{coord(rng), coord(rng)}, rate(rng)});
    double last = std::numeric_limits<double>::infinity();
    for (double ambient : {0.0, 2e-8, 4e-8, 6e-8}) {
        const std::vector<double> amb(users.size(), ambient);
        const double power = solve_cell(build_cell_problem(users, amb, p)).power;
        CHECK(power < last);
        last = power;
    }
}

TEST_CASE("iteration budget exhaustion reports the best iterate", "[deployment]")
{
    SolverConfig tight;
    tight.max_iters = 3;
    try {
        solve_cell(oracle::random_cell(9, 6), tight);
        FAIL("expected not_converged");
    } catch (const SolverNotConverged& e) {
        CHECK(e.kind() == ErrorKind::not_converged);
        CHECK_FALSE(e.best().converged);
        CHECK(e.best().power > 0.0);
        CHECK(e.best().duals.size() == 6);
    }
}

TEST_CASE("FOV check rejects users beyond the coverage radius", "[deployment]")
{
    const auto problem = uniform_problem({{0, 0}, {40, 0}}, 5e-3);
    const auto s = solve_cell(problem);
    try {
        check_fov(problem, s.position);
        FAIL("expected user_outside_fov");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::user_outside_fov);
    }
    CHECK_NOTHROW(check_fov(uniform_problem({{0, 0}, {10, 0}}, 5e-3), {5, 0}));
}

TEST_CASE("partition into aerial cells", "[deployment]")
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> jitter(0.0, 0.5);
    const std::vector<Point2> centres{{3, 3}, {3, 17}, {17, 3}, {17, 17}};
    std::vector<UserDemand> users;
    for (int i = 0; i < 40; ++i) {
        const auto c = centres[static_cast<std::size_t>(i % 4)];
        users.push_back({{c.x + jitter(rng), c.y + jitter(rng)}, 0.1});
    }

    const auto cells = partition_users(users, 4, 11);
    REQUIRE(cells.size() == 4);
    std::set<std::size_t> seen;
    for (const auto& cell : cells) {
        CHECK(cell.size() == 10);
        for (auto j : cell) {
            CHECK(seen.insert(j).second);
            CHECK(j % 4 == cell.front() % 4);
        }
    }
    CHECK(seen.size() == users.size());
    CHECK(partition_users(users, 4, 11) == cells);

    const auto single = partition_users(users, 1, 11);
    REQUIRE(single.size() == 1);
    CHECK(single[0].size() == 40);

    try {
        partition_users(std::span(users).first(3), 4, 1);
        FAIL("expected too_many_uavs");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::too_many_uavs);
    }
    CHECK_THROWS_AS(partition_users(users, 0, 1), Error);
}

TEST_CASE("total power sums the cells", "[deployment]")
{
    std::vector<DeploymentSolution> sols(3);
    sols[0].power = 0.25;
    sols[1].power = 1.5;
    sols[2].power = 0.125;
    CHECK(total_power(sols) == 1.875);
    CHECK(total_power({}) == 0.0);
}
