#pragma once

// Flat dumps of simulation and pricing output.
//
//   paths  : t,S,R10,R11,R20,R21,sigma,path_id   (CSV, or the same columns as
//            a little-endian binary block, see paths_binary)
//   panel  : t,R10,R11,R20,R21,vix
//   prices : T,K,kind,price,stderr,iv

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pdv/io/files.hpp"
#include "pdv/mc/nested_vix.hpp"
#include "pdv/mc/simulate.hpp"
#include "pdv/pricing/spx.hpp"

namespace pdv::io {

inline const std::vector<std::string>& paths_header() {
    static const std::vector<std::string> h{"t", "S", "R10", "R11", "R20", "R21", "sigma", "path_id"};
    return h;
}

// Rows ordered by path, then time.
inline std::string paths_csv(const PathBundle& b) {
    std::string out = join(paths_header()) + "\n";
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        for (std::size_t k = 0; k < b.n_times(); ++k) {
            const auto i = b.at(k, p);
            out += fmt(b.times[k]) + "," + fmt(b.spot[i]) + "," + fmt(b.r10[i]) + "," + fmt(b.r11[i]) + "," +
                   fmt(b.r20[i]) + "," + fmt(b.r21[i]) + "," + fmt(b.vol[i]) + "," + std::to_string(p) + "\n";
        }
    }
    return out;
}

inline constexpr char paths_magic[8] = {'P', 'D', 'V', 'P', 'A', 'T', 'H', '1'};

// Magic, u64 n_times, u64 n_paths, the times, then one column after another
// (S, R10, R11, R20, R21, sigma), each n_times * n_paths doubles stored by
// record. path_id is implicit in the position.
inline std::string paths_binary(const PathBundle& b) {
    ByteWriter w;
    w.put_raw(paths_magic, sizeof paths_magic);
    w.put(static_cast<std::uint64_t>(b.n_times()));
    w.put(static_cast<std::uint64_t>(b.n_paths));
    w.put_raw(b.times.data(), b.times.size() * sizeof(double));
    for (const auto* col : {&b.spot, &b.r10, &b.r11, &b.r20, &b.r21, &b.vol}) {
        w.put_raw(col->data(), col->size() * sizeof(double));
    }
    return std::move(w.bytes);
}

inline std::string panel_csv(std::span<const PanelRecord> panel) {
    std::string out = "t,R10,R11,R20,R21,vix\n";
    for (const auto& r : panel) {
        out += fmt(r.t) + "," + fmt(r.state.r_10) + "," + fmt(r.state.r_11) + "," + fmt(r.state.r_20) + "," +
               fmt(r.state.r_21) + "," + fmt(r.vix) + "\n";
    }
    return out;
}

inline std::string prices_csv(std::span<const PricedOption> prices) {
    std::string out = "T,K,kind,price,stderr,iv\n";
    for (const auto& p : prices) {
        out += fmt(p.spec.maturity) + "," + fmt(p.spec.strike) + "," +
               (p.spec.kind == OptionKind::call ? "call" : "put") + "," + fmt(p.price) + "," + fmt(p.stderr_) + "," +
               (std::isnan(p.iv) ? std::string() : fmt(p.iv)) + "\n";
    }
    return out;
}

}  // namespace pdv::io
