//! Scaled bilateral teleoperation with virtual decomposition control: spatial
//! algebra, serial-chain dynamics, adaptive estimation, both controllers, the
//! coupling layer, frequency-domain analysis and a closed-loop simulator.
//!
//! The numerical core is generic over [`real::Real`]; the aliases below fix
//! the scalar to `f64`.

pub mod analysis;
pub mod chain;
pub mod coupling;
pub mod estimation;
pub mod harness;
pub mod master;
pub mod real;
pub mod rigid_body;
pub mod spatial;
pub mod surrogate;

pub type MotionVector = spatial::MotionVector<f64>;
pub type ForceVector = spatial::ForceVector<f64>;
pub type FrameTransform = spatial::FrameTransform<f64>;
pub type InertialParams = rigid_body::InertialParams<f64>;
pub type ChainModel = chain::ChainModel<f64>;
pub type JointState = chain::JointState<f64>;
pub type Pose = chain::Pose<f64>;
pub type ChainController = master::ChainController<f64>;
pub type ScalingConfig = coupling::ScalingConfig<f64>;
pub type EnvironmentModel = surrogate::EnvironmentModel<f64>;
pub type ForceObserver = estimation::ForceObserver<f64>;
pub type ImpedanceModel = analysis::ImpedanceModel<f64>;
