//! Quote-data ingestion, preprocessing and bucketed statistics.

mod preprocess;
mod records;
mod stats;

pub use preprocess::{coalesce_single_sided, default_session, filter_session};
pub use records::{
    parse_quotes, partition, write_quotes, Exchange, ParsedQuotes, PartitionKey, QuoteRecord,
    EXCHANGE_CODES, MAX_MALFORMED_FRACTION,
};
pub use stats::{
    bucket_statistics, coefficients_from_data, empirical_pup, exchange_volume_shares,
    parse_bucket_label, read_empirical_column, read_empirical_table, write_correlation_table,
    write_drift_table, write_empirical_table, write_share_table, BucketStats, BucketTable, Buckets,
    EmpiricalPoint, ShareBasis, SideVolumes,
};
