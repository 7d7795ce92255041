use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use campaignd_core::campaign::CampaignError;
use campaignd_core::coverage::CoverageError;
use campaignd_core::geo::GeometryError;
use campaignd_core::guidance::GuidanceError;
use campaignd_core::store::IngestRejection;
use campaignd_core::StoreError;
use serde::{Deserialize, Serialize};

/// Error document returned for every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), code: code.to_owned(), message: message.into(), details: None }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found() -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such route")
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        crate::routes::json_response(status, &self)
    }
}

pub fn campaign_status(e: &CampaignError) -> StatusCode {
    use CampaignError::*;
    match e {
        EmptyRequiredField(_) | InvalidDateRange | InvalidTzOffset(_) | InvalidQuota(_) | InvalidWindow { .. }
        | NoWindows | InvalidPriority | DuplicateWindowId(_) | GeoJson(_) | ChecksumMismatch
        | MissingSensorPlugin(_) | NoRegions | InvalidPluginSpec(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Geometry(g) => match g {
            GeometryError::FewerThanThreeVertices
            | GeometryError::SelfIntersecting { .. }
            | GeometryError::DuplicateConsecutiveVertex { .. }
            | GeometryError::CoordinateOutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        },
        UnknownRegion(_) => StatusCode::NOT_FOUND,
        DuplicateRegionId(_) | DuplicatePluginId(_) | IllegalTransition { .. } | CampaignCompleted => {
            StatusCode::CONFLICT
        }
    }
}

pub fn store_status(e: &StoreError) -> StatusCode {
    match e {
        StoreError::UnknownCampaign(_) | StoreError::UnknownVolunteer => StatusCode::NOT_FOUND,
        StoreError::UnknownFormat(_) => StatusCode::BAD_REQUEST,
        StoreError::CampaignNotOpen(_) => StatusCode::CONFLICT,
        StoreError::Campaign(c) => campaign_status(c),
        StoreError::Coverage(CoverageError::EmptyCampaignExtent) => StatusCode::CONFLICT,
        StoreError::Coverage(CoverageError::InvalidCellSize) => StatusCode::BAD_REQUEST,
        StoreError::Guidance(GuidanceError::CampaignNotRunning) => StatusCode::CONFLICT,
        StoreError::Guidance(GuidanceError::InvalidK) => StatusCode::BAD_REQUEST,
        StoreError::Io(_) | StoreError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

pub fn rejection_status(r: IngestRejection) -> StatusCode {
    match r {
        IngestRejection::CampaignNotRunning => StatusCode::CONFLICT,
        IngestRejection::VolunteerPoweredOff
        | IngestRejection::VolunteerNotJoined
        | IngestRejection::SensorNotEnabled
        | IngestRejection::FutureTimestamp
        | IngestRejection::InvalidCoordinates
        | IngestRejection::ValueTooLarge
        | IngestRejection::InvalidPseudonym
        | IngestRejection::InvalidTimestamp => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let mut err = ApiError::new(store_status(&e), e.code(), e.to_string());
        if let StoreError::Campaign(c) = &e {
            if let Some(pointer) = c.region_pointer() {
                err = err.with_details(serde_json::json!({ "pointer": pointer }));
            }
        }
        err
    }
}

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        StoreError::Campaign(e).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use campaignd_core::campaign::Status;
    use campaignd_core::geo::GeoJsonError;
    use campaignd_core::store::log::LogError;
    use std::collections::BTreeMap;

    fn every_store_error() -> Vec<StoreError> {
        use CampaignError::*;
        let campaign = vec![
            EmptyRequiredField("title"),
            InvalidDateRange,
            InvalidTzOffset(900),
            InvalidQuota("min_count must be at least 1"),
            InvalidWindow { index: 0, reason: "empty" },
            NoWindows,
            InvalidPriority,
            DuplicateRegionId("r1".into()),
            DuplicateWindowId("w1".into()),
            UnknownRegion("r9".into()),
            Geometry(GeometryError::FewerThanThreeVertices),
            Geometry(GeometryError::SelfIntersecting { first: 0, second: 2 }),
            Geometry(GeometryError::DuplicateConsecutiveVertex { index: 1 }),
            Geometry(GeometryError::CoordinateOutOfRange { index: 0, reason: "lat" }),
            GeoJson(GeoJsonError::NotAPolygon("Point".into())),
            ChecksumMismatch,
            MissingSensorPlugin("wifi".into()),
            NoRegions,
            IllegalTransition { from: Status::Draft, to: Status::Running },
            CampaignCompleted,
            InvalidPluginSpec("empty id"),
            DuplicatePluginId("wifi".into()),
        ];
        let mut all: Vec<StoreError> = campaign.into_iter().map(StoreError::Campaign).collect();
        all.extend([
            StoreError::UnknownCampaign("c9".into()),
            StoreError::UnknownVolunteer,
            StoreError::UnknownFormat("xml".into()),
            StoreError::CampaignNotOpen(Status::Draft),
            StoreError::Coverage(CoverageError::EmptyCampaignExtent),
            StoreError::Coverage(CoverageError::InvalidCellSize),
            StoreError::Guidance(GuidanceError::CampaignNotRunning),
            StoreError::Guidance(GuidanceError::InvalidK),
            StoreError::Io("disk full".into()),
            StoreError::Log(LogError::Corrupt { path: "x.log".into(), last_valid_seq: 3, reason: "truncated".into() }),
        ]);
        all
    }

    #[test]
    fn each_code_has_one_status() {
        let mut seen: BTreeMap<String, u16> = BTreeMap::new();
        for e in every_store_error() {
            let api = ApiError::from(e);
            if let Some(prev) = seen.insert(api.code.clone(), api.status) {
                assert_eq!(prev, api.status, "{} maps to two statuses", api.code);
            }
        }
        let rejections = [
            IngestRejection::CampaignNotRunning,
            IngestRejection::VolunteerPoweredOff,
            IngestRejection::VolunteerNotJoined,
            IngestRejection::SensorNotEnabled,
            IngestRejection::FutureTimestamp,
            IngestRejection::InvalidCoordinates,
            IngestRejection::ValueTooLarge,
        ];
        for r in rejections {
            let status = rejection_status(r).as_u16();
            if let Some(prev) = seen.insert(r.code().to_owned(), status) {
                assert_eq!(prev, status, "{} maps to two statuses", r.code());
            }
        }
        // CAMPAIGN_NOT_RUNNING comes from both guidance and ingest.
        assert_eq!(seen.len(), every_store_error().len() + rejections.len() - 1);
    }

    #[test]
    fn client_errors_stay_in_documented_set() {
        for e in every_store_error() {
            let internal = matches!(e, StoreError::Io(_) | StoreError::Log(_));
            let api = ApiError::from(e);
            if internal {
                assert_eq!(api.status, 500);
            } else {
                assert!([400, 404, 409, 422].contains(&api.status), "{api}");
            }
        }
        assert_eq!(ApiError::not_found().status, 404);
    }

    #[test]
    fn region_errors_carry_pointer() {
        let api = ApiError::from(CampaignError::Geometry(GeometryError::SelfIntersecting { first: 0, second: 2 }));
        assert_eq!((api.status, api.code.as_str()), (422, "SELF_INTERSECTING"));
        assert_eq!(api.details.unwrap()["pointer"], "/polygon");
    }
}
