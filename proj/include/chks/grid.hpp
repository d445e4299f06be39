// grid.hpp - uniform rectangular grid with zero-flux boundary semantics,
// grid functions (Field), trapezoid-weighted inner products, CHKS1 field IO.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace chks {

// Evaluation guard for the singular potential and related floors.
inline constexpr double s_guard = 1e-9;

struct Grid2D {
    int nx = 0, ny = 0;    // node counts per axis, >= 3
    double lx = 1.0, ly = 1.0;
    double hx = 0.0, hy = 0.0;

    Grid2D() = default;
    Grid2D(int nx_, int ny_, double lx_ = 1.0, double ly_ = 1.0)
        : nx(nx_), ny(ny_), lx(lx_), ly(ly_) {
        if (nx < 3 || ny < 3)
            throw std::invalid_argument("Grid2D: nx, ny must be >= 3");
        if (!(lx > 0.0) || !(ly > 0.0))
            throw std::invalid_argument("Grid2D: lx, ly must be > 0");
        hx = lx / (nx - 1);
        hy = ly / (ny - 1);
    }

    int n() const { return nx * ny; }
    int idx(int i, int j) const { return j * nx + i; }
    double x(int i) const { return i * hx; }
    double y(int j) const { return j * hy; }

    // Trapezoid weight: 1 interior, 1/2 edge, 1/4 corner.
    double weight(int i, int j) const {
        double w = 1.0;
        if (i == 0 || i == nx - 1) w *= 0.5;
        if (j == 0 || j == ny - 1) w *= 0.5;
        return w;
    }
    double cell_area(int i, int j) const { return weight(i, j) * hx * hy; }
    double area() const { return lx * ly; }

    bool operator==(const Grid2D& o) const {
        return nx == o.nx && ny == o.ny && lx == o.lx && ly == o.ly;
    }
};

// Real-valued grid function, one scalar per node, row-major (j outer, i inner).
class Field {
public:
    Field() = default;
    explicit Field(const Grid2D& g, double value = 0.0)
        : grid_(g), v_(static_cast<size_t>(g.n()), value) {}

    const Grid2D& grid() const { return grid_; }
    int size() const { return static_cast<int>(v_.size()); }

    double& operator()(int i, int j) { return v_[grid_.idx(i, j)]; }
    double operator()(int i, int j) const { return v_[grid_.idx(i, j)]; }
    double& operator[](int k) { return v_[k]; }
    double operator[](int k) const { return v_[k]; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    void fill(double value) { std::fill(v_.begin(), v_.end(), value); }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }
    void require_finite(const char* what) const {
        if (!all_finite())
            throw std::runtime_error(std::string("non-finite values in ") + what);
    }

    bool empty() const { return v_.empty(); }

private:
    Grid2D grid_;
    std::vector<double> v_;
};

inline void require_same_grid(const Field& a, const Field& b) {
    if (!(a.grid() == b.grid()))
        throw std::invalid_argument("fields live on different grids");
}

// ---------------------------------------------------------------------------
// elementwise helpers (hot paths; no allocation)
// ---------------------------------------------------------------------------

// y += a*x
inline void axpy(double a, const Field& x, Field& y) {
    require_same_grid(x, y);
    const int n = x.size();
    for (int k = 0; k < n; ++k) y[k] += a * x[k];
}

inline void scale(Field& x, double a) {
    const int n = x.size();
    for (int k = 0; k < n; ++k) x[k] *= a;
}

// z = x + a*y
inline Field lincomb(const Field& x, double a, const Field& y) {
    require_same_grid(x, y);
    Field z = x;
    axpy(a, y, z);
    return z;
}

inline double min_value(const Field& f) {
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k < f.size(); ++k) m = std::min(m, f[k]);
    return m;
}

inline double max_value(const Field& f) {
    double m = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < f.size(); ++k) m = std::max(m, f[k]);
    return m;
}

inline double linf_norm(const Field& f) {
    double m = 0.0;
    for (int k = 0; k < f.size(); ++k) m = std::max(m, std::abs(f[k]));
    return m;
}

// ---------------------------------------------------------------------------
// trapezoid-weighted discrete L2: <f,g> = sum w_ij f_ij g_ij hx hy
// ---------------------------------------------------------------------------

inline double field_inner(const Field& f, const Field& g) {
    require_same_grid(f, g);
    const Grid2D& gr = f.grid();
    double s = 0.0;
    for (int j = 0; j < gr.ny; ++j) {
        const double wy = (j == 0 || j == gr.ny - 1) ? 0.5 : 1.0;
        double row = 0.0;
        const int base = j * gr.nx;
        row += 0.5 * f[base] * g[base];
        for (int i = 1; i < gr.nx - 1; ++i) row += f[base + i] * g[base + i];
        row += 0.5 * f[base + gr.nx - 1] * g[base + gr.nx - 1];
        s += wy * row;
    }
    return s * gr.hx * gr.hy;
}

inline double field_norm(const Field& f) {
    return std::sqrt(field_inner(f, f));
}

inline double field_mean(const Field& f) {
    const Grid2D& g = f.grid();
    Field one(g, 1.0);
    return field_inner(f, one) / g.area();
}

// Discrete H1 seminorm squared: sum over faces of |face gradient|^2 times the
// face cell measure (half edges along boundaries). Equals <-lap f, f>.
inline double grad_energy(const Field& f) {
    const Grid2D& g = f.grid();
    double s = 0.0;
    for (int j = 0; j < g.ny; ++j) {
        const double wy = (j == 0 || j == g.ny - 1) ? 0.5 : 1.0;
        for (int i = 0; i + 1 < g.nx; ++i) {
            const double d = (f(i + 1, j) - f(i, j)) / g.hx;
            s += wy * g.hy * g.hx * d * d;
        }
    }
    for (int i = 0; i < g.nx; ++i) {
        const double wx = (i == 0 || i == g.nx - 1) ? 0.5 : 1.0;
        for (int j = 0; j + 1 < g.ny; ++j) {
            const double d = (f(i, j + 1) - f(i, j)) / g.hy;
            s += wx * g.hx * g.hy * d * d;
        }
    }
    return s;
}

inline double h1_norm(const Field& f) {
    return std::sqrt(field_inner(f, f) + grad_energy(f));
}

// ---------------------------------------------------------------------------
// CHKS1 binary field format:
//   ASCII header line  "CHKS1 <nx> <ny> <lx> <ly>\n"
//   followed by nx*ny little-endian IEEE-754 doubles, row-major (j outer).
// ---------------------------------------------------------------------------

namespace detail {
inline void to_little_endian(double* buf, size_t n) {
    if constexpr (std::endian::native == std::endian::big) {
        for (size_t k = 0; k < n; ++k) {
            uint64_t u;
            std::memcpy(&u, &buf[k], 8);
            u = __builtin_bswap64(u);
            std::memcpy(&buf[k], &u, 8);
        }
    } else {
        (void)buf; (void)n;
    }
}
inline std::string format_double(double v) {
    char tmp[64];
    std::snprintf(tmp, sizeof tmp, "%.17g", v);
    return tmp;
}
} // namespace detail

inline void write_chks1(const Field& f, const std::string& path) {
    const Grid2D& g = f.grid();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "CHKS1 " << g.nx << " " << g.ny << " "
       << detail::format_double(g.lx) << " " << detail::format_double(g.ly) << "\n";
    std::vector<double> buf(f.data(), f.data() + f.size());
    detail::to_little_endian(buf.data(), buf.size());
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!os) throw std::runtime_error("short write: " + path);
}

inline Field read_chks1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for read: " + path);
    std::string magic;
    int nx = 0, ny = 0;
    double lx = 0, ly = 0;
    is >> magic >> nx >> ny >> lx >> ly;
    if (!is || magic != "CHKS1")
        throw std::runtime_error("bad CHKS1 header in " + path);
    // consume the single newline terminating the header
    int c = is.get();
    if (c != '\n') throw std::runtime_error("bad CHKS1 header terminator in " + path);
    Grid2D g(nx, ny, lx, ly);
    Field f(g);
    is.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(static_cast<size_t>(f.size()) * sizeof(double)));
    if (is.gcount() != static_cast<std::streamsize>(static_cast<size_t>(f.size()) * sizeof(double)))
        throw std::runtime_error("truncated CHKS1 payload in " + path);
    detail::to_little_endian(f.data(), static_cast<size_t>(f.size()));
    f.require_finite(path.c_str());
    return f;
}

// Read and require a specific grid; rejects mismatched headers.
inline Field read_chks1(const std::string& path, const Grid2D& expected) {
    Field f = read_chks1(path);
    if (!(f.grid() == expected))
        throw std::runtime_error("CHKS1 grid mismatch in " + path);
    return f;
}

// FNV-1a over raw bytes; used to fingerprint controls against stale trajectories.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t k = 0; k < n; ++k) {
        h ^= p[k];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t hash_field(const Field& f, uint64_t h = 1469598103934665603ull) {
    return fnv1a(f.data(), static_cast<size_t>(f.size()) * sizeof(double), h);
}

} // namespace chks
