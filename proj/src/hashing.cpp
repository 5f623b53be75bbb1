#include "meibo/hashing.hpp"

#include <openssl/sha.h>

#include <array>

namespace meibo {

namespace {
std::array<unsigned char, SHA256_DIGEST_LENGTH> digest(std::string_view bytes) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
    SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), out.data());
    return out;
}
}  // namespace

std::string sha256_hex(std::string_view bytes) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned char b : digest(bytes)) {
        out += kHex[b >> 4];
        out += kHex[b & 0xF];
    }
    return out;
}

std::uint64_t sha256_u64(std::string_view bytes) {
    auto d = digest(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
    return v;
}

}  // namespace meibo
