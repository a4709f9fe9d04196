pub use symbiot_core;
