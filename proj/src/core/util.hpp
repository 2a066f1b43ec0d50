#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace convprobe {

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

// Strict parsers: the whole string must be consumed.
int parse_int(const std::string& s);
double parse_double(const std::string& s);

std::uint64_t fnv1a64(std::string_view s);
std::string hex64(std::uint64_t v);
// Derives an independent stream seed from a base seed and a label.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view label);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

std::vector<std::uint8_t> read_file(const std::string& path);
std::string read_text_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace convprobe
