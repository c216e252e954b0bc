#pragma once

#include <cstdint>
#include <cstring>
#include <string>

namespace dmn {

// FNV-1a, 64-bit. Stable across platforms; used for run manifests and
// dataset/teacher tags, not for security.
class Fnv1a {
public:
    void update(const void* data, std::size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ULL;
        }
    }
    void update(double v) { update(&v, sizeof v); }
    void update(const std::string& s) { update(s.data(), s.size()); }
    std::uint64_t value() const { return h_; }
    std::string hex() const {
        static const char* d = "0123456789abcdef";
        std::string s(16, '0');
        std::uint64_t v = h_;
        for (int i = 15; i >= 0; --i) {
            s[i] = d[v & 0xF];
            v >>= 4;
        }
        return s;
    }

private:
    std::uint64_t h_ = 14695981039346656037ULL;
};

} // namespace dmn
