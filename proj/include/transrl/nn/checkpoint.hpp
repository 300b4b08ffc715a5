#ifndef TRANSRL_NN_CHECKPOINT_HPP
#define TRANSRL_NN_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "transrl/common.hpp"

namespace transrl::nn {

/// Binary weight file: "TRLW", u32 version, then three sections (scalars,
/// integer lists, f64 tensors), each a u32 count of (name, payload) records.
/// All numbers little-endian; strings are u32 length + bytes.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<std::int64_t>> ints;
    std::map<std::string, Eigen::VectorXd> tensors;

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot write checkpoint '" + path + "'");
        os.write("TRLW", 4);
        put_u32(os, kVersion);
        put_u32(os, static_cast<std::uint32_t>(scalars.size()));
        for (const auto& [k, v] : scalars) {
            put_str(os, k);
            put_f64(os, v);
        }
        put_u32(os, static_cast<std::uint32_t>(ints.size()));
        for (const auto& [k, v] : ints) {
            put_str(os, k);
            put_u32(os, static_cast<std::uint32_t>(v.size()));
            for (auto x : v) put_u64(os, static_cast<std::uint64_t>(x));
        }
        put_u32(os, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& [k, v] : tensors) {
            put_str(os, k);
            put_u64(os, static_cast<std::uint64_t>(v.size()));
            for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(os, v[i]);
        }
        if (!os) throw Error("write failed for checkpoint '" + path + "'");
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw Error("cannot read checkpoint '" + path + "'");
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, "TRLW", 4) != 0) throw Error("not a weight checkpoint: " + path);
        const auto version = get_u32(is);
        if (version != kVersion)
            throw Error("unsupported checkpoint version " + std::to_string(version));
        Checkpoint c;
        for (auto n = get_u32(is); n > 0; --n) {
            auto k = get_str(is);
            c.scalars[k] = get_f64(is);
        }
        for (auto n = get_u32(is); n > 0; --n) {
            auto k = get_str(is);
            std::vector<std::int64_t> v(get_u32(is));
            for (auto& x : v) x = static_cast<std::int64_t>(get_u64(is));
            c.ints[k] = std::move(v);
        }
        for (auto n = get_u32(is); n > 0; --n) {
            auto k = get_str(is);
            const auto len = get_u64(is);
            if (len > (1ull << 32)) throw Error("corrupt checkpoint tensor length");
            Eigen::VectorXd v(static_cast<Eigen::Index>(len));
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get_f64(is);
            c.tensors[k] = std::move(v);
        }
        return c;
    }

    double scalar(const std::string& k) const {
        auto it = scalars.find(k);
        if (it == scalars.end()) throw Error("checkpoint lacks scalar '" + k + "'");
        return it->second;
    }
    const std::vector<std::int64_t>& int_list(const std::string& k) const {
        auto it = ints.find(k);
        if (it == ints.end()) throw Error("checkpoint lacks list '" + k + "'");
        return it->second;
    }
    const Eigen::VectorXd& tensor(const std::string& k) const {
        auto it = tensors.find(k);
        if (it == tensors.end()) throw Error("checkpoint lacks tensor '" + k + "'");
        return it->second;
    }

private:
    static void put_u64(std::ostream& os, std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
    static void put_u32(std::ostream& os, std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 4);
    }
    static void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }
    static void put_str(std::ostream& os, const std::string& s) {
        put_u32(os, static_cast<std::uint32_t>(s.size()));
        os.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    static std::uint64_t get_u64(std::istream& is) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        if (!is) throw Error("truncated checkpoint");
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    static std::uint32_t get_u32(std::istream& is) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (!is) throw Error("truncated checkpoint");
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    static double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }
    static std::string get_str(std::istream& is) {
        const auto n = get_u32(is);
        if (n > (1u << 20)) throw Error("corrupt checkpoint string");
        std::string s(n, '\0');
        is.read(s.data(), n);
        if (!is) throw Error("truncated checkpoint");
        return s;
    }
};

}  // namespace transrl::nn

#endif
