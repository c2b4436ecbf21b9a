//! A small, complete set of input artifacts: the GodClass rule over a
//! three-class table in which only `OrderManager` matches.

use crate::inputs::{parse_request, AnalysisRequest};

pub const GOD_CLASS_SCRIPT: &str =
    "smell GodClass { severity high when wmc >= $WMC_VERY_HIGH and atfd > $FEW and tcc < $ONE_THIRD }\n";

pub const METRICS_CSV: &str = "\
entity_id,wmc,atfd,tcc
OrderManager,52,9,0.21
Invoice,12,2,0.6
CustomerRepository,48,3,0.3
";

pub const THRESHOLDS_JSON: &str = r#"{
  "WMC_VERY_HIGH": 47,
  "FEW": 5,
  "ONE_THIRD": 0.33
}
"#;

pub const METADATA_JSON: &str = r#"{
  "user_id": "u-17",
  "org_id": "acme",
  "project_id": "shop",
  "file_path": "src/main/java/shop/OrderManager.java",
  "language": "java",
  "latitude": -30.03,
  "longitude": -51.23
}
"#;

pub fn god_class_request() -> AnalysisRequest {
    parse_request(
        GOD_CLASS_SCRIPT.as_bytes(),
        METRICS_CSV.as_bytes(),
        THRESHOLDS_JSON.as_bytes(),
        METADATA_JSON.as_bytes(),
        None,
    )
    .expect("sample artifacts parse")
}
