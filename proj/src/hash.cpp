#include "flowcls/hash.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "flowcls/error.hpp"

namespace flowcls {

std::uint64_t murmur64(std::span<const std::byte> data, std::uint64_t seed) noexcept {
    constexpr std::uint64_t m = 0xc6a4a7935bd1e995ULL;
    constexpr int r = 47;
    const std::size_t len = data.size();
    std::uint64_t h = seed ^ (len * m);

    const std::size_t blocks = len / 8;
    for (std::size_t i = 0; i < blocks; ++i) {
        std::uint64_t k;
        std::memcpy(&k, data.data() + i * 8, 8);
        k *= m;
        k ^= k >> r;
        k *= m;
        h ^= k;
        h *= m;
    }

    const auto* tail = reinterpret_cast<const unsigned char*>(data.data() + blocks * 8);
    switch (len & 7) {
        case 7: h ^= std::uint64_t(tail[6]) << 48; [[fallthrough]];
        case 6: h ^= std::uint64_t(tail[5]) << 40; [[fallthrough]];
        case 5: h ^= std::uint64_t(tail[4]) << 32; [[fallthrough]];
        case 4: h ^= std::uint64_t(tail[3]) << 24; [[fallthrough]];
        case 3: h ^= std::uint64_t(tail[2]) << 16; [[fallthrough]];
        case 2: h ^= std::uint64_t(tail[1]) << 8; [[fallthrough]];
        case 1:
            h ^= std::uint64_t(tail[0]);
            h *= m;
    }

    h ^= h >> r;
    h *= m;
    h ^= h >> r;
    return h;
}

std::string sha256_hex(std::string_view data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                                &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw Error(ErrorKind::io_error, "hash", "sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_file_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io_error, "hash", "cannot open " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(content);
}

}  // namespace flowcls
