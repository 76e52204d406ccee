#pragma once

#include <filesystem>
#include <string>

namespace recon {

std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over the target, so the
// target is never left half-written.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& bytes);

// Probability formatting for CSV artifacts: rounded to at most
// `max_decimals` places, trailing zeros trimmed ("1", "0.99", "0.3333").
std::string format_probability(double p, int max_decimals = 4);

// Fixed-width variant used for summary lines ("0.9119").
std::string format_probability_fixed(double p, int decimals = 4);

} // namespace recon
