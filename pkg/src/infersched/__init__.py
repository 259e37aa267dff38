"""Energy-aware placement of DNN inference across edge processors, a connected device and the cloud."""
