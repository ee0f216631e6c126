#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

// Scalar special functions for Gaussian tails: Cody's rational minimax
// approximations for erf/erfc/erfcx (Math. Comp. 1969, netlib specfun) and
// Wichura's AS241 inverse normal CDF.  erfc keeps relative accuracy ~1e-15
// through the far tail, which the moderate-deviation ratios divide by.

namespace lcl {

namespace special_detail {

// jint: 0 -> erf, 1 -> erfc, 2 -> erfcx := exp(x^2) erfc(x)
inline double calerf(double x, int jint) {
    static const double a[5] = {3.1611237438705656, 113.864154151050156,
                                377.485237685302021, 3209.37758913846947,
                                .185777706184603153};
    static const double b[4] = {23.6012909523441209, 244.024637934444173,
                                1282.61652607737228, 2844.23683343917062};
    static const double c[9] = {.564188496988670089, 8.88314979438837594,
                                66.1191906371416295, 298.635138197400131,
                                881.95222124176909,  1712.04761263407058,
                                2051.07837782607147, 1230.33935479799725,
                                2.15311535474403846e-8};
    static const double d[8] = {15.7449261107098347, 117.693950891312499,
                                537.181101862009858, 1621.38957456669019,
                                3290.79923573345963, 4362.61909014324716,
                                3439.36767414372164, 1230.33935480374942};
    static const double p[6] = {.305326634961232344, .360344899949804439,
                                .125781726111229246, .0160837851487422766,
                                6.58749161529837803e-4, .0163153871373020978};
    static const double q[5] = {2.56852019228982242, 1.87295284992346047,
                                .527905102951428412, .0605183413124413191,
                                .00233520497626869185};

    constexpr double sqrpi = 0.56418958354775628695;  // 1/sqrt(pi)
    constexpr double thresh = 0.46875;
    constexpr double xinf = 1.79e308, xneg = -26.628, xsmall = 1.11e-16;
    constexpr double xbig = 26.543, xhuge = 6.71e7, xmax = 2.53e307;

    const double y = std::fabs(x);
    double result;

    if (y <= thresh) {
        double ysq = y > xsmall ? y * y : 0.0;
        double xnum = a[4] * ysq, xden = ysq;
        for (int i = 0; i < 3; ++i) {
            xnum = (xnum + a[i]) * ysq;
            xden = (xden + b[i]) * ysq;
        }
        result = x * (xnum + a[3]) / (xden + b[3]);
        if (jint != 0) result = 1.0 - result;
        if (jint == 2) result *= std::exp(ysq);
        return result;
    }
    if (y <= 4.0) {
        double xnum = c[8] * y, xden = y;
        for (int i = 0; i < 7; ++i) {
            xnum = (xnum + c[i]) * y;
            xden = (xden + d[i]) * y;
        }
        result = (xnum + c[7]) / (xden + d[7]);
        if (jint != 2) {
            double ysq = std::trunc(y * 16.0) / 16.0;
            double del = (y - ysq) * (y + ysq);
            result *= std::exp(-ysq * ysq) * std::exp(-del);
        }
    } else {
        result = 0.0;
        if (y >= xbig && (jint != 2 || y >= xmax)) {
            // fall through to the tail fixup
        } else if (y >= xbig && y >= xhuge) {
            result = sqrpi / y;
        } else {
            double ysq = 1.0 / (y * y);
            double xnum = p[5] * ysq, xden = ysq;
            for (int i = 0; i < 4; ++i) {
                xnum = (xnum + p[i]) * ysq;
                xden = (xden + q[i]) * ysq;
            }
            result = ysq * (xnum + p[4]) / (xden + q[4]);
            result = (sqrpi - result) / y;
            if (jint != 2) {
                double ysq2 = std::trunc(y * 16.0) / 16.0;
                double del = (y - ysq2) * (y + ysq2);
                result *= std::exp(-ysq2 * ysq2) * std::exp(-del);
            }
        }
    }
    if (jint == 0) {
        result = 0.5 - result + 0.5;
        if (x < 0.0) result = -result;
    } else if (jint == 1) {
        if (x < 0.0) result = 2.0 - result;
    } else {
        if (x < 0.0) {
            if (x < xneg) {
                result = xinf;
            } else {
                double ysq = std::trunc(x * 16.0) / 16.0;
                double del = (x - ysq) * (x + ysq);
                double z = std::exp(ysq * ysq) * std::exp(del);
                result = z + z - result;
            }
        }
    }
    return result;
}

}  // namespace special_detail

inline double erf_cody(double x) { return special_detail::calerf(x, 0); }
inline double erfc_cody(double x) { return special_detail::calerf(x, 1); }
inline double erfcx_cody(double x) { return special_detail::calerf(x, 2); }

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kSqrt2 = 1.41421356237309504880;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

inline double normal_cdf(double z) { return 0.5 * erfc_cody(-z * kInvSqrt2); }

// Upper tail P(Z > z), accurate in relative terms far into the tail.
inline double normal_upper(double z) { return 0.5 * erfc_cody(z * kInvSqrt2); }

// log P(Z <= z) without underflow for very negative z.
inline double normal_log_cdf(double z) {
    if (z > -1.0) return std::log1p(-normal_upper(z));
    // Phi(z) = phi(z) / h(-z) with h the hazard ratio, via erfcx.
    const double r = erfcx_cody(-z * kInvSqrt2);
    return -0.5 * z * z + std::log(0.5 * r);
}

// Hazard ratio phi(z)/P(Z > z) = sqrt(2/pi)/erfcx(z/sqrt(2)); stable for all z.
inline double normal_hazard(double z) {
    return (2.0 * kInvSqrt2Pi) / erfcx_cody(z * kInvSqrt2);
}

// Wichura's AS241 (PPND16): inverse of normal_cdf, |relative error| < 1e-15
// over the full double range of p in (0,1).
inline double normal_icdf(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw std::domain_error("normal_icdf: p outside [0,1]");
    }
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                  3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

}  // namespace lcl
