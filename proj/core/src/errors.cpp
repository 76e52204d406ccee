#include "recon/errors.hpp"

namespace recon {

const char* errc_name(Errc code) noexcept {
    switch (code) {
    case Errc::space_too_large: return "SpaceTooLarge";
    case Errc::unknown_node: return "UnknownNode";
    case Errc::inadmissible_configuration: return "InadmissibleConfiguration";
    case Errc::schema_violation: return "SchemaViolation";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::unknown_label: return "UnknownLabel";
    case Errc::incomplete_dependency_model: return "IncompleteDependencyModel";
    case Errc::degenerate_prior: return "DegeneratePrior";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::malformed_row: return "MalformedRow";
    case Errc::unknown_field: return "UnknownField";
    case Errc::domain_violation: return "DomainViolation";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::format_error: return "FormatError";
    case Errc::io_error: return "IoError";
    }
    return "Error";
}

} // namespace recon
