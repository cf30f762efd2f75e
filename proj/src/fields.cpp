#include "mfrde/fields.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mfrde {

namespace {

void zero(double* p, Index n) { std::memset(p, 0, n * sizeof(double)); }

double sech2(double u) {
    const double c = std::cosh(u);
    return 1.0 / (c * c);
}

// Diagonal componentwise structure shared by the builtins; derived classes
// supply phi_i and its derivatives.
class DiagonalField : public MeanFieldField {
public:
    DiagonalField(Index d) : d_(d) {}
    Index state_dim() const override { return d_; }
    Index driver_dim() const override { return d_; }

protected:
    Index d_;
};

class ConstantField : public MeanFieldField {
public:
    ConstantField(Index d, Index m, double value) : d_(d), m_(m), value_(value) {}
    Index state_dim() const override { return d_; }
    Index driver_dim() const override { return m_; }
    std::string name() const override { return "constant"; }
    void eval(const double*, const EmpiricalMeasure&, double* out) const override {
        zero(out, d_ * m_);
        for (Index i = 0; i < std::min(d_, m_); ++i) out[i * m_ + i] = value_;
    }
    void dx(const double*, const EmpiricalMeasure&, double* out) const override {
        zero(out, d_ * m_ * d_);
    }
    void dmu(const double*, const EmpiricalMeasure&, const double*, double* out) const override {
        zero(out, d_ * m_ * d_);
    }
    bool dmu_is_zero() const override { return true; }
    double bound() const override { return std::fabs(value_); }

private:
    Index d_, m_;
    double value_;
};

class LinearXField : public DiagonalField {
public:
    LinearXField(Index d, double sigma) : DiagonalField(d), sigma_(sigma) {}
    std::string name() const override { return "linear-x"; }
    void eval(const double* x, const EmpiricalMeasure&, double* out) const override {
        zero(out, d_ * d_);
        for (Index i = 0; i < d_; ++i) out[i * d_ + i] = sigma_ * x[i];
    }
    void dx(const double*, const EmpiricalMeasure&, double* out) const override {
        zero(out, d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i) out[(i * d_ + i) * d_ + i] = sigma_;
    }
    void dmu(const double*, const EmpiricalMeasure&, const double*, double* out) const override {
        zero(out, d_ * d_ * d_);
    }
    bool dmu_is_zero() const override { return true; }
    double bound() const override { return std::fabs(sigma_); }

private:
    double sigma_;
};

class MeanOnlyField : public DiagonalField {
public:
    MeanOnlyField(Index d, double sigma) : DiagonalField(d), sigma_(sigma) {}
    std::string name() const override { return "mean"; }
    void eval(const double*, const EmpiricalMeasure& mu, double* out) const override {
        zero(out, d_ * d_);
        for (Index i = 0; i < d_; ++i) out[i * d_ + i] = sigma_ * mu.mean[i];
    }
    void dx(const double*, const EmpiricalMeasure&, double* out) const override {
        zero(out, d_ * d_ * d_);
    }
    void dmu(const double*, const EmpiricalMeasure&, const double*, double* out) const override {
        zero(out, d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i) out[(i * d_ + i) * d_ + i] = sigma_;
    }
    bool dmu_z_independent() const override { return true; }
    double bound() const override { return std::fabs(sigma_); }

private:
    double sigma_;
};

class GOfMeanField : public DiagonalField {
public:
    enum class Form { Bilinear, Sin };
    GOfMeanField(Index d, Form form, double a, double b, double c)
        : DiagonalField(d), form_(form), a_(a), b_(b), c_(c) {}
    std::string name() const override { return "g-of-mean"; }

    void eval(const double* x, const EmpiricalMeasure& mu, double* out) const override {
        zero(out, d_ * d_);
        for (Index i = 0; i < d_; ++i) out[i * d_ + i] = g(x[i], mu.mean[i]);
    }
    void dx(const double* x, const EmpiricalMeasure& mu, double* out) const override {
        zero(out, d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i) out[(i * d_ + i) * d_ + i] = g_x(x[i], mu.mean[i]);
    }
    void dmu(const double* x, const EmpiricalMeasure& mu, const double*,
             double* out) const override {
        zero(out, d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i) out[(i * d_ + i) * d_ + i] = g_u(x[i], mu.mean[i]);
    }
    bool dmu_z_independent() const override { return true; }
    double bound() const override { return std::fabs(a_) + std::fabs(b_); }

    bool has_dx_dmu() const override { return true; }
    void dx_dmu(const double* x, const EmpiricalMeasure& mu, const double*,
                double* out) const override {
        zero(out, d_ * d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i)
            out[(((i * d_ + i) * d_ + i)) * d_ + i] = g_xu(x[i], mu.mean[i]);
    }
    bool has_dz_dmu() const override { return true; }
    void dz_dmu(const double*, const EmpiricalMeasure&, const double*,
                double* out) const override {
        zero(out, d_ * d_ * d_ * d_);
    }

private:
    double g(double x, double u) const {
        return form_ == Form::Bilinear ? x * (a_ + b_ * u) : a_ * std::sin(x + c_ * u) + b_;
    }
    double g_x(double x, double u) const {
        return form_ == Form::Bilinear ? (a_ + b_ * u) : a_ * std::cos(x + c_ * u);
    }
    double g_u(double x, double u) const {
        return form_ == Form::Bilinear ? b_ * x : a_ * c_ * std::cos(x + c_ * u);
    }
    double g_xu(double x, double u) const {
        return form_ == Form::Bilinear ? b_ : -a_ * c_ * std::sin(x + c_ * u);
    }

    Form form_;
    double a_, b_, c_;
};

class ConvKernelField : public DiagonalField {
public:
    ConvKernelField(Index d, double a, double c) : DiagonalField(d), a_(a), c_(c) {}
    std::string name() const override { return "conv-kernel"; }

    void eval(const double* x, const EmpiricalMeasure& mu, double* out) const override {
        zero(out, d_ * d_);
        for (Index i = 0; i < d_; ++i) {
            double s = 0.0;
            for (Index j = 0; j < mu.M; ++j)
                s += mu.weights[j] * a_ * std::tanh(x[i] - c_ * mu.point(j)[i]);
            out[i * d_ + i] = s;
        }
    }
    void dx(const double* x, const EmpiricalMeasure& mu, double* out) const override {
        zero(out, d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i) {
            double s = 0.0;
            for (Index j = 0; j < mu.M; ++j)
                s += mu.weights[j] * a_ * sech2(x[i] - c_ * mu.point(j)[i]);
            out[(i * d_ + i) * d_ + i] = s;
        }
    }
    void dmu(const double* x, const EmpiricalMeasure&, const double* z,
             double* out) const override {
        zero(out, d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i)
            out[(i * d_ + i) * d_ + i] = -a_ * c_ * sech2(x[i] - c_ * z[i]);
    }
    double bound() const override { return std::fabs(a_) * std::max(1.0, std::fabs(c_)); }

    bool has_dx_dmu() const override { return true; }
    void dx_dmu(const double* x, const EmpiricalMeasure&, const double* z,
                double* out) const override {
        zero(out, d_ * d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i) {
            const double u = x[i] - c_ * z[i];
            out[(((i * d_ + i) * d_ + i)) * d_ + i] =
                2.0 * a_ * c_ * sech2(u) * std::tanh(u);
        }
    }
    bool has_dz_dmu() const override { return true; }
    void dz_dmu(const double* x, const EmpiricalMeasure&, const double* z,
                double* out) const override {
        zero(out, d_ * d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i) {
            const double u = x[i] - c_ * z[i];
            out[(((i * d_ + i) * d_ + i)) * d_ + i] =
                -2.0 * a_ * c_ * c_ * sech2(u) * std::tanh(u);
        }
    }

private:
    double a_, c_;
};

class SecondMomentField : public DiagonalField {
public:
    explicit SecondMomentField(Index d) : DiagonalField(d) {}
    std::string name() const override { return "second-moment"; }
    void eval(const double*, const EmpiricalMeasure& mu, double* out) const override {
        zero(out, d_ * d_);
        for (Index i = 0; i < d_; ++i) out[i * d_ + i] = mu.second_moment;
    }
    void dx(const double*, const EmpiricalMeasure&, double* out) const override {
        zero(out, d_ * d_ * d_);
    }
    void dmu(const double*, const EmpiricalMeasure&, const double* z,
             double* out) const override {
        zero(out, d_ * d_ * d_);
        for (Index i = 0; i < d_; ++i)
            for (Index l = 0; l < d_; ++l) out[(i * d_ + i) * d_ + l] = 2.0 * z[l];
    }
    double bound() const override { return 1.0; }
};

}  // namespace

std::unique_ptr<MeanFieldField> make_constant_field(Index d, Index m, double value) {
    return std::make_unique<ConstantField>(d, m, value);
}
std::unique_ptr<MeanFieldField> make_linear_x_field(Index d, double sigma) {
    return std::make_unique<LinearXField>(d, sigma);
}
std::unique_ptr<MeanFieldField> make_mean_field(Index d, double sigma) {
    return std::make_unique<MeanOnlyField>(d, sigma);
}
std::unique_ptr<MeanFieldField> make_g_of_mean_field(Index d, const std::string& form, double a,
                                                     double b, double c) {
    if (form == "bilinear")
        return std::make_unique<GOfMeanField>(d, GOfMeanField::Form::Bilinear, a, b, c);
    if (form == "sin") return std::make_unique<GOfMeanField>(d, GOfMeanField::Form::Sin, a, b, c);
    throw std::invalid_argument("g-of-mean: unknown form '" + form + "'");
}
std::unique_ptr<MeanFieldField> make_conv_kernel_field(Index d, double a, double c) {
    return std::make_unique<ConvKernelField>(d, a, c);
}
std::unique_ptr<MeanFieldField> make_second_moment_field(Index d) {
    return std::make_unique<SecondMomentField>(d);
}

std::vector<std::string> builtin_field_names() {
    return {"constant", "linear-x", "mean", "g-of-mean", "conv-kernel", "second-moment"};
}

}  // namespace mfrde
