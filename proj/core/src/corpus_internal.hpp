#pragma once

#include "langkit/corpus.hpp"

namespace langkit::corpus::detail {

// Applies text normalization, char_len, and domain derivation to a freshly
// ingested document. Shared by the jsonl and wet ingest paths.
void finalize_document(Document& doc);

}  // namespace langkit::corpus::detail
