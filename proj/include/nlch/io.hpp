#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "nlch/error.hpp"
#include "nlch/forward.hpp"
#include "nlch/inverse.hpp"

namespace nlch {

// Field file layout (all little-endian):
//   "NLCHF1" | nx u32 | ny u32 | lx f64 | ly f64 | nx*ny f64, x fastest
inline constexpr std::array<char, 6> field_magic{'N', 'L', 'C', 'H', 'F', '1'};
inline constexpr std::size_t field_header_bytes = 6 + 4 + 4 + 8 + 8;

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

template <class U>
U get_le(const unsigned char* p) {
    U v = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(p[b]) << (8 * b);
    return v;
}

}  // namespace detail

inline std::string encode_field(const ScalarField& f) {
    const GridSpec& g = f.grid();
    std::string out(field_magic.begin(), field_magic.end());
    out.reserve(field_header_bytes + 8 * f.size());
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.nx));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.ny));
    detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(g.lx));
    detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(g.ly));
    for (double v : f.values()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

inline ScalarField decode_field(const std::string& bytes, const std::string& origin = "<memory>") {
    if (bytes.size() < field_header_bytes) throw IoError(origin + ": truncated header");
    if (std::memcmp(bytes.data(), field_magic.data(), field_magic.size()) != 0)
        throw IoError(origin + ": bad magic (not an NLCHF1 field file)");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + field_magic.size();
    const auto nx = detail::get_le<std::uint32_t>(p);
    const auto ny = detail::get_le<std::uint32_t>(p + 4);
    const double lx = std::bit_cast<double>(detail::get_le<std::uint64_t>(p + 8));
    const double ly = std::bit_cast<double>(detail::get_le<std::uint64_t>(p + 16));
    if (nx == 0 || ny == 0) throw IoError(origin + ": header declares an empty grid");
    if (nx > (1u << 20) || ny > (1u << 20)) throw IoError(origin + ": header grid size is implausible");
    GridSpec g{static_cast<int>(nx), static_cast<int>(ny), lx, ly};
    try {
        g.validate();
    } catch (const ConfigError& e) {
        throw IoError(origin + ": invalid header grid: " + e.what());
    }
    const std::size_t expect = field_header_bytes + 8 * g.size();
    if (bytes.size() < expect) throw IoError(origin + ": truncated payload");
    if (bytes.size() > expect) throw IoError(origin + ": trailing bytes after payload");
    std::vector<double> v(g.size());
    const unsigned char* d = reinterpret_cast<const unsigned char*>(bytes.data()) + field_header_bytes;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::bit_cast<double>(detail::get_le<std::uint64_t>(d + 8 * k));
    return ScalarField(g, std::move(v));
}

inline void write_field(const std::filesystem::path& path, const ScalarField& f) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const std::string bytes = encode_field(f);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

inline ScalarField read_field(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return decode_field(ss.str(), path.string());
}

/// Reads a field that must live on `expected`.
inline ScalarField read_field(const std::filesystem::path& path, const GridSpec& expected) {
    ScalarField f = read_field(path);
    if (!(f.grid() == expected)) throw GridMismatch(path.string() + ": field grid does not match the configured grid");
    return f;
}

// --- CSV ----------------------------------------------------------------

namespace detail {
inline std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << std::setprecision(17);
    return os;
}
}  // namespace detail

inline void write_energy_csv(const std::filesystem::path& path, const EnergyReport& report) {
    auto os = detail::open_csv(path);
    os << "t,mass_phi,mass_sigma,energy,max_abs_phi,entropy\n";
    for (const auto& r : report.rows)
        os << r.t << ',' << r.mass_phi << ',' << r.mass_sigma << ',' << r.energy << ',' << r.max_abs_phi << ','
           << r.entropy << '\n';
}

inline void write_iterate_csv(const std::filesystem::path& path, const IterateLog& log) {
    auto os = detail::open_csv(path);
    os << "iter,f_alpha,misfit,penalty,step,opt_residual,active_fraction\n";
    for (const auto& r : log.rows)
        os << r.iter << ',' << r.f_alpha << ',' << r.misfit << ',' << r.penalty << ',' << r.step << ','
           << r.opt_residual << ',' << r.active_fraction << '\n';
}

inline void write_continuation_csv(const std::filesystem::path& path, const ContinuationResult& res) {
    auto os = detail::open_csv(path);
    os << "j,alpha,misfit,residual_norm,f_alpha,opt_residual,iterations,status\n";
    for (const auto& s : res.steps)
        os << s.j << ',' << s.alpha << ',' << s.misfit << ',' << s.residual_norm << ',' << s.f_alpha << ','
           << s.opt_residual << ',' << s.iterations << ',' << to_string(s.status) << '\n';
}

}  // namespace nlch
