#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "turbid/stats.hpp"

namespace ts = turbid::stats;

// Boost.Math is used as an independent reference implementation.
TEST(IncompleteGamma, MatchesReference) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ua(0.1, 40.0), ux(0.0, 80.0);
    for (int i = 0; i < 500; ++i) {
        const double a = ua(rng), x = ux(rng);
        EXPECT_NEAR(ts::gamma_p(a, x), boost::math::gamma_p(a, x), 1e-12) << a << " " << x;
        EXPECT_NEAR(ts::gamma_q(a, x), boost::math::gamma_q(a, x), 1e-12) << a << " " << x;
    }
}

TEST(IncompleteBeta, MatchesReference) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ua(0.2, 60.0), ux(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double a = ua(rng), b = ua(rng), x = ux(rng);
        EXPECT_NEAR(ts::beta_inc(a, b, x), boost::math::ibeta(a, b, x), 1e-11) << a << " " << b << " " << x;
    }
}

TEST(Distributions, ChiSquareAndFTails) {
    for (double dof : {1.0, 5.0, 10.0, 25.0}) {
        boost::math::chi_squared chi(dof);
        for (double x : {0.5, 3.0, 10.0, 30.0})
            EXPECT_NEAR(ts::chi2_sf(x, dof), boost::math::cdf(boost::math::complement(chi, x)), 1e-12);
    }
    for (double d1 : {1.0, 3.0, 11.0})
        for (double d2 : {20.0, 180.0}) {
            boost::math::fisher_f f(d1, d2);
            for (double x : {0.2, 1.0, 3.5, 12.0})
                EXPECT_NEAR(ts::f_sf(x, d1, d2), boost::math::cdf(boost::math::complement(f, x)), 1e-11);
        }
    EXPECT_EQ(ts::chi2_sf(0.0, 3.0), 1.0);
    EXPECT_THROW(ts::gamma_p(-1.0, 1.0), std::domain_error);
}

TEST(Descriptive, AcfAndDifference) {
    std::vector<double> alt(30);
    for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = (i % 2) ? -1.0 : 1.0;
    EXPECT_NEAR(ts::acf(alt, 1)[0], -29.0 / 30.0, 1e-14);
    const std::vector<double> c(10, 3.0);
    EXPECT_EQ(ts::acf(c, 3), std::vector<double>(3, 0.0));
    const std::vector<double> x{1, 4, 9, 16};
    EXPECT_EQ(ts::difference(x, 1), (std::vector<double>{3, 5, 7}));
    EXPECT_EQ(ts::difference(x, 2), (std::vector<double>{2, 2}));
    EXPECT_DOUBLE_EQ(ts::quantile({1, 2, 3, 4}, 0.5), 2.5);
}

TEST(Kpss, SeparatesRandomWalkFromNoise) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    int rw_rejects = 0, wn_rejects = 0;
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> wn(200), rw(200);
        double s = 0.0;
        for (auto i = 0u; i < 200u; ++i) {
            wn[i] = z(rng);
            s += z(rng);
            rw[i] = s;
        }
        wn_rejects += ts::kpss_level(wn) > ts::kKpssCritical5;
        rw_rejects += ts::kpss_level(rw) > ts::kKpssCritical5;
    }
    EXPECT_LT(wn_rejects, 25);
    EXPECT_GT(rw_rejects, 170);
}
