#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vibimg {

/// A real double matrix as stored in the file: dims plus column-major data.
struct MatArray {
    std::vector<std::size_t> dims;
    std::vector<double> data;
};

struct Mat5Contents {
    std::map<std::string, MatArray> variables;
    /// One entry per element that was present but not a real double matrix.
    std::vector<std::string> warnings;
};

/// Parses a MATLAB Level-5 MAT-file image.
///
/// Supported: the 128-byte header in either byte order, miMATRIX elements of
/// class double (stored with any numeric data type, which MATLAB uses to
/// shrink integer-valued data), and miCOMPRESSED elements. Complex, sparse,
/// char, cell, struct, object and integer-class arrays are skipped and
/// reported in `warnings`.
///
/// Throws Error with BadMagic, UnsupportedVersion, TruncatedElement or
/// DecompressFailure.
Mat5Contents read_mat5(std::span<const std::byte> bytes);

Mat5Contents read_mat5_file(const std::string& path);

} // namespace vibimg
