//! Behavior monitoring: event ingestion, windowed features, decision-tree
//! classification, core-file and sitemap checks, alert delivery.

pub mod alerts;
pub mod builtin;
pub mod dispatch;
pub mod event;
pub mod features;
pub mod sitemap;
pub mod synth;
pub mod tree;

pub use alerts::{classify_windows, core_touch_alerts, drift_alert, Alert, AlertCategory};
pub use builtin::{builtin_tree, BuiltinThresholds};
pub use dispatch::{
    dispatch_alert, AlertSink, DeliveryRecord, DispatchError, FileSink, RetryPolicy, SinkError, SmtpSettings,
    SmtpSink,
};
pub use event::{ingest, parse_event_line, BehaviorEvent, EventBody, IngestError, Ingested, Protocol};
pub use features::{window_features, window_features_with, FeatureVector, GroupBy, FEATURE_NAMES};
pub use sitemap::{drift_between, parse_sitemap, render_sitemap, sitemap_drift, DriftReport, SitemapParseError};
pub use tree::{classify, train_tree, DecisionTree, Label, Node, Sample, TreeError, TreeParams};
