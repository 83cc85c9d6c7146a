#pragma once

// Option chains, curves and return series: in-memory types, CSV loaders and
// writers. Maturities are whole calendar days, T = days / 365.
//
//   SPX chain   date,T_days,K,kind,bid_iv,ask_iv,mid_iv
//   VIX chain   date,T_days,future,K,bid,ask,mid
//   curve       t_years,rate
//   returns     date,ret
//
// SPX strikes are in units of the spot unless the loader is given a spot. A
// chain row may leave K and the quote fields empty to declare a maturity; a
// maturity that ends up without strikes is dropped with a warning.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/io/files.hpp"
#include "pdv/market/curves.hpp"
#include "pdv/pricing/black.hpp"

namespace pdv {

inline double years_from_days(int days) { return days / 365.0; }

struct SpxQuote {
    double strike = 0.0;
    OptionKind kind = OptionKind::call;
    double bid_iv = 0.0;
    double ask_iv = 0.0;
    double mid_iv = 0.0;
    friend bool operator==(const SpxQuote&, const SpxQuote&) = default;
};

struct SpxSlice {
    int days = 0;
    double forward = 0.0;
    std::vector<SpxQuote> quotes;  // strictly increasing strikes
    double maturity() const { return years_from_days(days); }
    friend bool operator==(const SpxSlice&, const SpxSlice&) = default;
};

struct OptionChain {
    std::string date;
    double spot = 1.0;
    std::vector<SpxSlice> slices;  // strictly increasing maturities
    std::vector<std::string> warnings;

    std::size_t n_quotes() const {
        std::size_t n = 0;
        for (const auto& s : slices) n += s.quotes.size();
        return n;
    }
};

struct VixQuote {
    double strike = 0.0;
    double bid = 0.0;
    double ask = 0.0;
    double mid = 0.0;
    double mid_iv = std::numeric_limits<double>::quiet_NaN();  // Black vol against the future; NaN if not invertible
    friend bool operator==(const VixQuote& a, const VixQuote& b) {
        return a.strike == b.strike && a.bid == b.bid && a.ask == b.ask && a.mid == b.mid;
    }
};

struct VixSliceQuotes {
    int days = 0;
    double future = 0.0;
    std::vector<VixQuote> quotes;
    double maturity() const { return years_from_days(days); }
    friend bool operator==(const VixSliceQuotes&, const VixSliceQuotes&) = default;
};

struct VixChain {
    std::string date;
    std::vector<VixSliceQuotes> slices;
    std::vector<std::string> warnings;
};

inline const std::vector<std::string>& spx_chain_header() {
    static const std::vector<std::string> h{"date", "T_days", "K", "kind", "bid_iv", "ask_iv", "mid_iv"};
    return h;
}
inline const std::vector<std::string>& vix_chain_header() {
    static const std::vector<std::string> h{"date", "T_days", "future", "K", "bid", "ask", "mid"};
    return h;
}

namespace detail {

inline int day_count(const io::CsvTable& t, const io::CsvRow& r, std::size_t col) {
    const double d = t.number(r, col);
    if (!(d >= 1.0) || d != std::floor(d) || d > 1e5) t.fail(r.line, "T_days must be a positive whole number of days");
    return static_cast<int>(d);
}

inline void check_date(const io::CsvTable& t, const io::CsvRow& r, std::string& date) {
    const std::string& d = r.cells[0];
    if (d.empty()) t.fail(r.line, "date is empty");
    if (date.empty()) date = d;
    if (d != date) t.fail(r.line, "date '" + d + "' differs from '" + date + "' on an earlier row");
}

inline bool blank_from(const io::CsvRow& r, std::size_t col) {
    for (std::size_t c = col; c < r.cells.size(); ++c) {
        if (!r.cells[c].empty()) return false;
    }
    return true;
}

}  // namespace detail

// Validates quotes: positive strikes, bid <= mid <= ask, positive vols.
inline OptionChain parse_spx_chain(const std::string& text, const std::string& source, const Curves& curves = {},
                                   double spot = 1.0) {
    if (!(spot > 0.0)) throw InputError(source + ": spot must be positive");
    const auto t = io::parse_csv(text, spx_chain_header(), source);
    OptionChain chain;
    chain.spot = spot;
    std::map<int, std::vector<std::pair<std::size_t, SpxQuote>>> by_days;
    for (const auto& r : t.rows) {
        detail::check_date(t, r, chain.date);
        const int days = detail::day_count(t, r, 1);
        auto& slot = by_days[days];
        if (detail::blank_from(r, 2)) continue;
        SpxQuote q;
        q.strike = t.number(r, 2);
        if (!(q.strike > 0.0) || !std::isfinite(q.strike)) t.fail(r.line, "strike must be positive");
        try {
            q.kind = parse_option_kind(r.cells[3]);
        } catch (const InputError& e) {
            t.fail(r.line, e.what());
        }
        q.bid_iv = t.number(r, 4);
        q.ask_iv = t.number(r, 5);
        q.mid_iv = t.number(r, 6);
        if (q.bid_iv > q.ask_iv) {
            t.fail(r.line, "crossed quote: bid_iv " + io::fmt(q.bid_iv) + " > ask_iv " + io::fmt(q.ask_iv));
        }
        if (!(q.bid_iv <= q.mid_iv && q.mid_iv <= q.ask_iv)) t.fail(r.line, "mid_iv outside [bid_iv, ask_iv]");
        if (!(q.bid_iv >= 0.0) || !(q.mid_iv > 0.0) || !std::isfinite(q.ask_iv)) {
            t.fail(r.line, "implied vols must be finite, bid >= 0 and mid > 0");
        }
        slot.emplace_back(r.line, q);
    }
    for (auto& [days, rows] : by_days) {
        if (rows.empty()) {
            chain.warnings.push_back(source + ": maturity " + std::to_string(days) + "d has no strikes; dropped");
            continue;
        }
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second.strike < b.second.strike; });
        SpxSlice s;
        s.days = days;
        s.forward = curves.forward(spot, years_from_days(days));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0 && rows[i].second.strike == rows[i - 1].second.strike) {
                t.fail(rows[i].first, "duplicate strike " + io::fmt(rows[i].second.strike) + " at " +
                                          std::to_string(days) + "d");
            }
            s.quotes.push_back(rows[i].second);
        }
        chain.slices.push_back(std::move(s));
    }
    return chain;
}

// Mid implied vols are Black vols of the undiscounted mid against the
// future; quotes where that fails keep NaN and are reported.
inline VixChain parse_vix_chain(const std::string& text, const std::string& source, const Curves& curves = {}) {
    const auto t = io::parse_csv(text, vix_chain_header(), source);
    VixChain chain;
    struct Pending {
        double future = 0.0;
        std::size_t future_line = 0;
        std::vector<std::pair<std::size_t, VixQuote>> rows;
    };
    std::map<int, Pending> by_days;
    for (const auto& r : t.rows) {
        detail::check_date(t, r, chain.date);
        const int days = detail::day_count(t, r, 1);
        const double fut = t.number(r, 2);
        if (!(fut > 0.0) || !std::isfinite(fut)) t.fail(r.line, "future must be positive");
        auto& p = by_days[days];
        if (p.future_line == 0) {
            p.future = fut;
            p.future_line = r.line;
        } else if (fut != p.future) {
            t.fail(r.line, "future " + io::fmt(fut) + " differs from " + io::fmt(p.future) + " on line " +
                               std::to_string(p.future_line));
        }
        if (detail::blank_from(r, 3)) continue;
        VixQuote q;
        q.strike = t.number(r, 3);
        q.bid = t.number(r, 4);
        q.ask = t.number(r, 5);
        q.mid = t.number(r, 6);
        if (!(q.strike > 0.0) || !std::isfinite(q.strike)) t.fail(r.line, "strike must be positive");
        if (q.bid > q.ask) t.fail(r.line, "crossed quote: bid " + io::fmt(q.bid) + " > ask " + io::fmt(q.ask));
        if (!(q.bid <= q.mid && q.mid <= q.ask)) t.fail(r.line, "mid outside [bid, ask]");
        if (!(q.bid >= 0.0) || !std::isfinite(q.ask)) t.fail(r.line, "prices must be finite and nonnegative");
        p.rows.emplace_back(r.line, q);
    }
    for (auto& [days, p] : by_days) {
        if (p.rows.empty()) {
            chain.warnings.push_back(source + ": maturity " + std::to_string(days) + "d has no strikes; dropped");
            continue;
        }
        std::sort(p.rows.begin(), p.rows.end(), [](const auto& a, const auto& b) { return a.second.strike < b.second.strike; });
        VixSliceQuotes s;
        s.days = days;
        s.future = p.future;
        const double tm = years_from_days(days);
        const double df = curves.discount(tm);
        for (std::size_t i = 0; i < p.rows.size(); ++i) {
            auto q = p.rows[i].second;
            if (i > 0 && q.strike == p.rows[i - 1].second.strike) {
                t.fail(p.rows[i].first, "duplicate strike " + io::fmt(q.strike) + " at " + std::to_string(days) + "d");
            }
            try {
                q.mid_iv = implied_vol(q.mid / df, s.future, q.strike, tm, OptionKind::call);
            } catch (const InputError&) {
                chain.warnings.push_back(source + ":" + std::to_string(p.rows[i].first) +
                                         ": mid price has no Black implied vol");
            }
            s.quotes.push_back(q);
        }
        chain.slices.push_back(std::move(s));
    }
    return chain;
}

inline OptionChain load_spx_chain(const std::filesystem::path& path, const Curves& curves = {}, double spot = 1.0) {
    return parse_spx_chain(io::read_text(path), path.string(), curves, spot);
}
inline VixChain load_vix_chain(const std::filesystem::path& path, const Curves& curves = {}) {
    return parse_vix_chain(io::read_text(path), path.string(), curves);
}

inline std::string format_spx_chain(const OptionChain& c) {
    std::string out = io::join(spx_chain_header()) + "\n";
    for (const auto& s : c.slices) {
        for (const auto& q : s.quotes) {
            out += c.date + "," + std::to_string(s.days) + "," + io::fmt(q.strike) + "," + to_string(q.kind) + "," +
                   io::fmt(q.bid_iv) + "," + io::fmt(q.ask_iv) + "," + io::fmt(q.mid_iv) + "\n";
        }
    }
    return out;
}

inline std::string format_vix_chain(const VixChain& c) {
    std::string out = io::join(vix_chain_header()) + "\n";
    for (const auto& s : c.slices) {
        for (const auto& q : s.quotes) {
            out += c.date + "," + std::to_string(s.days) + "," + io::fmt(s.future) + "," + io::fmt(q.strike) + "," +
                   io::fmt(q.bid) + "," + io::fmt(q.ask) + "," + io::fmt(q.mid) + "\n";
        }
    }
    return out;
}

inline void save_spx_chain(const std::filesystem::path& path, const OptionChain& c) {
    io::write_text(path, format_spx_chain(c));
}
inline void save_vix_chain(const std::filesystem::path& path, const VixChain& c) {
    io::write_text(path, format_vix_chain(c));
}

// Step curve: the rate on row i applies from t_years[i] to the next row. The
// first row must be t = 0.
inline PiecewiseConstantCurve parse_curve(const std::string& text, const std::string& source) {
    const auto t = io::parse_csv(text, {"t_years", "rate"}, source);
    std::vector<double> times, values;
    for (const auto& r : t.rows) {
        times.push_back(t.number(r, 0));
        values.push_back(t.number(r, 1));
        if (times.size() == 1 && times[0] != 0.0) t.fail(r.line, "first breakpoint must be t_years = 0");
        if (times.size() > 1 && !(times.back() > times[times.size() - 2])) {
            t.fail(r.line, "t_years must be strictly increasing");
        }
    }
    if (times.empty()) throw InputError(source + ": curve has no rows");
    return PiecewiseConstantCurve(std::move(times), std::move(values));
}

inline PiecewiseConstantCurve load_curve(const std::filesystem::path& path) {
    return parse_curve(io::read_text(path), path.string());
}

inline std::string format_curve(const PiecewiseConstantCurve& c) {
    std::string out = "t_years,rate\n";
    for (std::size_t i = 0; i < c.times().size(); ++i) out += io::fmt(c.times()[i]) + "," + io::fmt(c.values()[i]) + "\n";
    return out;
}

// Daily returns, oldest first.
struct ReturnSeries {
    std::vector<std::string> dates;
    std::vector<double> returns;
};

inline ReturnSeries parse_returns(const std::string& text, const std::string& source) {
    const auto t = io::parse_csv(text, {"date", "ret"}, source);
    ReturnSeries s;
    for (const auto& r : t.rows) {
        if (r.cells[0].empty()) t.fail(r.line, "date is empty");
        if (!s.dates.empty() && !(r.cells[0] > s.dates.back())) {
            t.fail(r.line, "dates must be strictly increasing (oldest first)");
        }
        const double v = t.number(r, 1);
        if (!std::isfinite(v) || v <= -1.0) t.fail(r.line, "return must be finite and > -1");
        s.dates.push_back(r.cells[0]);
        s.returns.push_back(v);
    }
    if (s.returns.empty()) throw InputError(source + ": no returns");
    return s;
}

inline ReturnSeries load_returns(const std::filesystem::path& path) {
    return parse_returns(io::read_text(path), path.string());
}

inline std::string format_returns(const ReturnSeries& s) {
    std::string out = "date,ret\n";
    for (std::size_t i = 0; i < s.returns.size(); ++i) out += s.dates[i] + "," + io::fmt(s.returns[i]) + "\n";
    return out;
}

// Listed-expiry helpers. Exchange holidays are not handled.
inline std::chrono::year_month_day third_friday(std::chrono::year y, std::chrono::month m) {
    using namespace std::chrono;
    return year_month_day{sys_days{y / m / Friday[3]}};
}

// Monthly VIX expiry: 30 days before the third Friday of the following month.
inline std::chrono::year_month_day vix_expiry(std::chrono::year y, std::chrono::month m) {
    using namespace std::chrono;
    const year_month next = y / m + months{1};
    return year_month_day{sys_days{third_friday(next.year(), next.month())} - days{30}};
}

inline std::chrono::year_month_day parse_iso_date(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char a = 0, b = 0;
    std::istringstream in(s);
    in >> y >> a >> m >> b >> d;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!in || a != '-' || b != '-' || !in.eof() || !ymd.ok()) throw InputError("'" + s + "' is not a YYYY-MM-DD date");
    return ymd;
}

inline std::string format_iso_date(std::chrono::year_month_day d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

inline int days_between(std::chrono::year_month_day from, std::chrono::year_month_day to) {
    return static_cast<int>((std::chrono::sys_days{to} - std::chrono::sys_days{from}).count());
}

}  // namespace pdv
