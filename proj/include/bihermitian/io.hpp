#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "field.hpp"

namespace bihermitian {

using Json = nlohmann::ordered_json;

inline int value_components(ValueKind k)
{
    switch (k) {
    case ValueKind::Scalar: return 1;
    case ValueKind::OneForm:
    case ValueKind::ThreeForm:
    case ValueKind::Vector: return 4;
    default: return 16;
    }
}

inline ValueKind value_kind_from(const std::string& s)
{
    for (ValueKind k : {ValueKind::Scalar, ValueKind::OneForm, ValueKind::TwoForm, ValueKind::ThreeForm,
                        ValueKind::Vector, ValueKind::Bivector, ValueKind::Endomorphism, ValueKind::Metric})
        if (s == to_string(k)) return k;
    throw Error(ErrorKind::InvalidInput, "unknown field kind '" + s + "'");
}

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    require(bool(out), ErrorKind::Io, "cannot open " + p.string() + " for writing");
    out << text;
    require(bool(out), ErrorKind::Io, "write failed: " + p.string());
}

inline std::string read_text(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    require(bool(in), ErrorKind::Io, "cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_json(const std::filesystem::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& p)
{
    try {
        return Json::parse(read_text(p));
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::InvalidInput, p.string() + ": " + e.what());
    }
}

/// Shortest round-trip decimal for a double, the same as the JSON writer.
inline std::string format_number(double v)
{
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    return Json(v).dump();
}

inline void write_csv(const std::filesystem::path& p, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows)
{
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (const auto& r : rows) {
        require(r.size() == header.size(), ErrorKind::InvalidInput, "write_csv: row width mismatch");
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_number(r[i]);
        out += "\n";
    }
    write_text(p, out);
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return int(i);
        throw Error(ErrorKind::InvalidInput, "csv: missing column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::filesystem::path& p)
{
    std::istringstream in(read_text(p));
    CsvTable t;
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) out.push_back(cell);
        return out;
    };
    require(bool(std::getline(in, line)), ErrorKind::InvalidInput, p.string() + ": empty csv");
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& c : split(line)) row.push_back(std::stod(c));
        require(row.size() == t.header.size(), ErrorKind::InvalidInput, p.string() + ": ragged row");
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ---- field dumps: <stem>.bin (little-endian f64, node-major, matrices row-major) + <stem>.json

struct FieldHeader {
    ValueKind kind = ValueKind::Scalar;
    FlatBundleSpec bundle;
    GridDims dims;
    double lambda = 0;
};

inline Json to_json(const FieldHeader& h)
{
    return Json{{"kind", to_string(h.kind)},
                {"bundle", {{"p1", h.bundle.p1}, {"p2", h.bundle.p2}, {"power", h.bundle.power}}},
                {"grid", {{"n_s", h.dims.n_s}, {"n_eta", h.dims.n_eta}, {"n_xi1", h.dims.n_xi1}, {"n_xi2", h.dims.n_xi2}}},
                {"lambda", h.lambda}};
}

inline FieldHeader field_header_from(const Json& j)
{
    try {
        FieldHeader h;
        h.kind = value_kind_from(j.at("kind").get<std::string>());
        const auto& b = j.at("bundle");
        h.bundle = {b.at("p1").get<int>(), b.at("p2").get<int>(), b.at("power").get<int>()};
        const auto& g = j.at("grid");
        h.dims = {g.at("n_s").get<int>(), g.at("n_eta").get<int>(), g.at("n_xi1").get<int>(), g.at("n_xi2").get<int>()};
        h.lambda = j.at("lambda").get<double>();
        return h;
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::InvalidInput, std::string("field header: ") + e.what());
    }
}

namespace detail {

inline void put_le(std::string& out, double v)
{
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(char((bits >> (8 * b)) & 0xff));
}

inline double get_le(const unsigned char* p)
{
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t(p[b]) << (8 * b);
    return std::bit_cast<double>(bits);
}

template <class T>
void pack(std::string& out, const T& v)
{
    if constexpr (std::is_arithmetic_v<T>) {
        put_le(out, double(v));
    } else {
        for (int r = 0; r < v.rows(); ++r)
            for (int c = 0; c < v.cols(); ++c) put_le(out, v(r, c));
    }
}

template <class T>
void unpack(const unsigned char*& p, T& v)
{
    if constexpr (std::is_arithmetic_v<T>) {
        v = get_le(p);
        p += 8;
    } else {
        for (int r = 0; r < v.rows(); ++r)
            for (int c = 0; c < v.cols(); ++c) {
                v(r, c) = get_le(p);
                p += 8;
            }
    }
}

template <class T>
constexpr int components_of()
{
    if constexpr (std::is_arithmetic_v<T>)
        return 1;
    else
        return T::RowsAtCompileTime * T::ColsAtCompileTime;
}

} // namespace detail

template <class T>
void write_field(const std::filesystem::path& dir, const std::string& stem, const EquivariantField<T>& f)
{
    require(detail::components_of<T>() == value_components(f.kind), ErrorKind::InvalidInput,
            "write_field: value type does not match the field kind");
    std::string bin;
    bin.reserve(f.size() * detail::components_of<T>() * 8);
    for (const auto& v : f.data) detail::pack(bin, v);
    write_text(dir / (stem + ".bin"), bin);
    FieldHeader h{f.kind, f.bundle, f.grid->dims(), f.grid->lambda()};
    write_json(dir / (stem + ".json"), to_json(h));
}

inline std::filesystem::path field_binary_path(const std::filesystem::path& header_path)
{
    auto p = header_path;
    return p.replace_extension(".bin");
}

/// Load a dump onto `grid`; the header must describe the same grid dimensions and λ.
template <class T>
EquivariantField<T> read_field(const std::filesystem::path& header_path, GridPtr grid)
{
    const FieldHeader h = field_header_from(read_json(header_path));
    require(detail::components_of<T>() == value_components(h.kind), ErrorKind::InvalidInput,
            header_path.string() + ": field kind '" + to_string(h.kind) + "' has the wrong value type");
    require(h.dims == grid->dims() && h.lambda == grid->lambda(), ErrorKind::InvalidInput,
            header_path.string() + ": grid or lambda does not match");
    const std::string bin = read_text(field_binary_path(header_path));
    require(bin.size() == grid->size() * detail::components_of<T>() * 8, ErrorKind::InvalidInput,
            header_path.string() + ": binary size does not match the header");
    EquivariantField<T> f(grid, h.bundle, h.kind, zero_value<T>());
    auto p = reinterpret_cast<const unsigned char*>(bin.data());
    for (auto& v : f.data) detail::unpack(p, v);
    return f;
}

/// Exclusive lock on an output directory, released on destruction.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir) : path_(dir / ".lock")
    {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        require(!ec, ErrorKind::Io, "cannot create output directory " + dir.string());
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        require(fd_ >= 0, ErrorKind::Io,
                "output directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                    " if stale)");
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;
    ~DirLock()
    {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            std::filesystem::remove(path_, ec);
        }
    }

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

} // namespace bihermitian
