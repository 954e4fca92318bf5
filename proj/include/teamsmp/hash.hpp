#pragma once

// Content hashes for run provenance and the ensemble cache.

#include <openssl/evp.h>

#include <stdexcept>
#include <string>

namespace teamsmp::hash {

inline std::string digest_hex(const std::string& data, const EVP_MD* md) {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out, &len, md, nullptr) != 1)
        throw std::runtime_error("digest computation failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        s.push_back(hex[out[i] >> 4]);
        s.push_back(hex[out[i] & 0xF]);
    }
    return s;
}

inline std::string sha1_hex(const std::string& data) { return digest_hex(data, EVP_sha1()); }
inline std::string sha256_hex(const std::string& data) { return digest_hex(data, EVP_sha256()); }

// Same id `git hash-object` assigns to a file with this content.
inline std::string git_blob_hash(const std::string& content) {
    std::string framed = "blob " + std::to_string(content.size());
    framed.push_back('\0');
    framed += content;
    return sha1_hex(framed);
}

}  // namespace teamsmp::hash
